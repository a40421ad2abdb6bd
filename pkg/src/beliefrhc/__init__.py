"""Receding-horizon planning over particle beliefs.

The planner couples trajectory optimization with anticipated estimation
quality: stage costs weight the propagated particle spread by a
state-dependent observation weighting, so optimized trajectories detour
through informative regions.  Obstacles enter as smooth exponential
penalty fields.  The inner optimization's size depends only on the
horizon, never on the particle count.
"""

from .belief import (
    GaussianMixture,
    GoalSpec,
    ParticleBelief,
    goal_probability,
    map_estimate,
    pf_update,
    sample_initial_belief,
)
from .dynamics import (
    BearingObservation,
    LightDarkObservation,
    LinearProcess,
    LinearizedSystem,
    ObservationModel,
    ProcessModel,
    RangeObservation,
    UnicycleProcess,
    linearize_observation,
    linearize_process,
    observe,
    step,
)
from .errors import (
    BeliefRHCError,
    ConfigurationError,
    CostEvaluationError,
    DegenerateBeliefError,
    LinearizationError,
    SingularObservationError,
    SolverInitializationError,
)
from .objective import (
    ChainProducts,
    ConvexityReport,
    CostContext,
    CostWeights,
    MapTrajectory,
    OffsetSummary,
    chain_products,
    cost_gradient,
    lemma1_audit,
    map_trajectory,
    offset_summaries,
    total_cost,
    weight_matrix,
)
from .obstacles import (
    Ellipsoid,
    ObstacleSet,
    cover_walls,
    coverage_margin,
    opf_grad,
    opf_value,
)
from .rhc import (
    EpisodeConfig,
    ExecutionTrace,
    Planner,
    StepRecord,
    policy,
    run_episode,
    stop_check,
)
from .scenarios import (
    Scenario,
    load_scenario,
    scenario_to_dict,
    validate_scenario,
    write_trace,
)
from .solver import (
    PlanProblem,
    PlanSolution,
    problem_size,
    solve,
    warm_start,
)

__version__ = "0.1.0"

__all__ = [
    "BearingObservation",
    "BeliefRHCError",
    "ChainProducts",
    "ConfigurationError",
    "ConvexityReport",
    "CostContext",
    "CostEvaluationError",
    "CostWeights",
    "DegenerateBeliefError",
    "EpisodeConfig",
    "Ellipsoid",
    "ExecutionTrace",
    "GaussianMixture",
    "GoalSpec",
    "LightDarkObservation",
    "LinearProcess",
    "LinearizationError",
    "LinearizedSystem",
    "MapTrajectory",
    "ObservationModel",
    "ObstacleSet",
    "OffsetSummary",
    "ParticleBelief",
    "PlanProblem",
    "PlanSolution",
    "Planner",
    "ProcessModel",
    "RangeObservation",
    "Scenario",
    "SingularObservationError",
    "SolverInitializationError",
    "StepRecord",
    "UnicycleProcess",
    "chain_products",
    "cost_gradient",
    "cover_walls",
    "coverage_margin",
    "goal_probability",
    "lemma1_audit",
    "linearize_observation",
    "linearize_process",
    "load_scenario",
    "map_estimate",
    "map_trajectory",
    "observe",
    "offset_summaries",
    "opf_grad",
    "opf_value",
    "pf_update",
    "policy",
    "problem_size",
    "run_episode",
    "sample_initial_belief",
    "scenario_to_dict",
    "solve",
    "step",
    "stop_check",
    "total_cost",
    "validate_scenario",
    "warm_start",
    "weight_matrix",
    "write_trace",
]
