"""Exception types shared across the package."""


class BeliefRHCError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(BeliefRHCError):
    """Invalid dimensions, parameters, or scenario data."""


class LinearizationError(BeliefRHCError):
    """Non-finite Jacobian or drift term at some step of a nominal trajectory."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SingularObservationError(BeliefRHCError):
    """Observation map or its Jacobian is undefined at the query state."""


class CostEvaluationError(BeliefRHCError):
    """Objective evaluation produced a non-finite value.

    ``step`` identifies the first horizon step (1-based) at which the
    stage cost failed, when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DegenerateBeliefError(BeliefRHCError):
    """All particle weights collapsed to zero (or non-finite) during an update."""


class SolverInitializationError(BeliefRHCError):
    """The objective is non-finite at every provided starting point."""
