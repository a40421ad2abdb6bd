"""Closed-loop receding-horizon execution.

Each cycle: check the goal-probability stop criterion, plan a K-step
control sequence from the current belief, apply the first control to the
true (simulated) state, draw a noisy observation, update the particle
belief, and repeat.  Planning re-linearizes the process model around the
warm-started trajectory each re-plan; the first plan uses a straight
start-to-goal interpolation (or the scenario's ``initial_path``) as the
nominal.  The planner only ever sees the belief and the scenario
description, never the true state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .belief import (
    goal_probability,
    map_estimate,
    pf_update,
    sample_initial_belief,
)
from .dynamics import linearize_process, observe, step
from .errors import (
    ConfigurationError,
    DegenerateBeliefError,
    SolverInitializationError,
)
from .objective import (
    CostContext,
    CostWeights,
    chain_products,
    map_trajectory,
    offset_summaries,
)
from .scenarios import control_weight_matrix
from .solver import (
    PlanProblem,
    path_tracking_controls,
    solve,
    straight_line_controls,
    warm_start,
)


@dataclass(frozen=True)
class EpisodeConfig:
    """Configuration of one closed-loop episode.

    ``seed`` is the master seed; independent child streams are derived
    from it for the initial belief, the true initial state, process
    noise, measurement noise, and per-step filter updates.
    """

    scenario: object
    horizon: int
    num_particles: int
    max_steps: int
    replan_period: int = 1
    beta: int = None
    seed: int = 0
    max_iterations: int = 20000
    multi_start: bool = None
    on_round: object = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1")
        if self.num_particles < 1:
            raise ConfigurationError("num_particles must be at least 1")
        if self.max_steps < 0:
            raise ConfigurationError("max_steps must be nonnegative")
        if self.replan_period < 1:
            raise ConfigurationError("replan_period must be at least 1")

    @classmethod
    def from_scenario(cls, scenario, seed=0, **overrides):
        """Episode config using the scenario's defaults, with overrides."""
        defaults = scenario.defaults
        values = {
            "horizon": defaults.horizon,
            "num_particles": defaults.num_particles,
            "max_steps": defaults.max_steps,
            "replan_period": defaults.replan_period,
            "beta": defaults.beta,
        }
        values.update(overrides)
        return cls(scenario=scenario, seed=seed, **values)

    @property
    def effective_beta(self):
        if self.beta is None:
            return self.scenario.defaults.beta
        return int(self.beta)

    @property
    def effective_multi_start(self):
        if self.multi_start is None:
            return bool(self.effective_beta)
        return bool(self.multi_start)


@dataclass(frozen=True)
class StepRecord:
    """One executed control step."""

    step: int
    true_state: np.ndarray
    control: np.ndarray
    observation: np.ndarray
    map_estimate: np.ndarray
    goal_probability: float
    replanned: bool
    solver_status: str
    solver_iterations: int
    plan_cost: float
    terminal_residual: float
    solve_time: float


@dataclass(frozen=True)
class ExecutionTrace:
    """Recorded episode: per-step records plus the termination reason."""

    records: tuple
    reason: str
    success: bool
    final_goal_probability: float
    scenario_name: str
    seed: int
    horizon: int
    num_particles: int

    @property
    def steps(self):
        return len(self.records)


def stop_check(belief, goal):
    """True once the belief probability of the goal ball reaches the threshold."""
    return goal_probability(belief, goal) >= goal.threshold


class Planner:
    """Receding-horizon planner with warm-started re-planning.

    Holds the mutable cache between cycles: the previous solution, the
    executed-step counter, and the queued controls between re-plans.
    """

    def __init__(self, config):
        self.config = config
        scenario = config.scenario
        self.scenario = scenario
        self.V = control_weight_matrix(scenario)
        self.prev_solution = None
        self.queue_index = 0
        self.steps_taken = 0
        self.last_replanned = False

    def _nominal(self, x_map):
        """Nominal (states, controls) for linearization."""
        scenario = self.scenario
        horizon = self.config.horizon
        process = scenario.process
        if self.prev_solution is not None:
            controls = warm_start(self.prev_solution)
            states = _rollout(process, x_map, controls)
            return states, controls
        eye_lin = linearize_process(
            process,
            np.repeat(x_map[None, :], horizon + 1, axis=0),
            np.zeros((horizon, process.n_u)),
        )
        if scenario.initial_path is not None:
            states = resample_path(scenario.initial_path, horizon)
        else:
            line = np.outer(
                np.arange(horizon + 1) / horizon, scenario.goal.state - x_map
            )
            states = x_map + line
        controls = path_tracking_controls(eye_lin, states)
        states = _rollout(process, x_map, controls)
        return states, controls

    def plan(self, belief):
        """Solve one horizon problem from the current belief."""
        config = self.config
        scenario = self.scenario
        x_map = map_estimate(belief)
        nominal_states, nominal_controls = self._nominal(x_map)
        lin = linearize_process(scenario.process, nominal_states, nominal_controls)
        chains = chain_products(lin)
        offsets = offset_summaries(belief, x_map, chains)
        traj = map_trajectory(lin, x_map)
        weights = CostWeights(V=self.V, beta=config.effective_beta)
        beta_obstacles = scenario.obstacles if scenario.obstacles.num_terms else None
        ctx = CostContext(
            map_traj=traj,
            offsets=offsets,
            weights=weights,
            observation=scenario.observation,
            obstacles=beta_obstacles,
        )
        problem = PlanProblem(
            ctx=ctx,
            goal_state=scenario.goal.state,
            u_max=scenario.defaults.control_limit,
            max_iterations=config.max_iterations,
            U0=nominal_controls.ravel(),
            multi_start=config.effective_multi_start,
            on_round=config.on_round,
        )
        solution = solve(problem)
        self.prev_solution = solution
        self.queue_index = 0
        return solution

    def policy(self, belief):
        """Next control: re-plan per the configured period, else dequeue."""
        due = (
            self.prev_solution is None
            or self.steps_taken % self.config.replan_period == 0
            or self.queue_index >= self.config.horizon
        )
        if due:
            self.plan(belief)
            self.last_replanned = True
        else:
            self.last_replanned = False
        control = self.prev_solution.controls[
            min(self.queue_index, self.config.horizon - 1)
        ]
        self.queue_index += 1
        self.steps_taken += 1
        return control


def policy(belief, config, cache):
    """Functional facade over Planner; ``cache`` persists between calls."""
    planner = cache.get("planner")
    if planner is None:
        planner = Planner(config)
        cache["planner"] = planner
    return planner.policy(belief)


def run_episode(config):
    """Execute one closed-loop episode; returns its ExecutionTrace.

    Terminates with reason "goal" when the stop criterion passes,
    "max-steps" when the step budget runs out, "filter-degenerate" when
    the particle filter collapses even after its retry, or
    "planner-degenerate" when the belief has drifted somewhere no
    candidate plan has finite cost (for example past an observation
    model's singularity).
    """
    scenario = config.scenario
    seed_seq = np.random.SeedSequence(config.seed)
    belief_seed, true_seed, process_seed, measurement_seed, filter_seed = (
        seed_seq.spawn(5)
    )
    belief = sample_initial_belief(
        scenario.initial_belief, config.num_particles, belief_seed
    )
    true_state = sample_initial_belief(scenario.initial_belief, 1, true_seed).particles[
        0
    ]
    process_rng = np.random.default_rng(process_seed)
    measurement_rng = np.random.default_rng(measurement_seed)
    filter_rng = np.random.default_rng(filter_seed)

    planner = Planner(config)
    records = []
    reason = "max-steps"
    prob = goal_probability(belief, scenario.goal)
    for step_index in range(config.max_steps):
        if prob >= scenario.goal.threshold:
            reason = "goal"
            break
        t_solve = time.perf_counter()
        try:
            control = planner.policy(belief)
        except SolverInitializationError:
            reason = "planner-degenerate"
            break
        solve_time = time.perf_counter() - t_solve
        true_state = step(scenario.process, true_state, control, rng=process_rng)
        measurement = observe(scenario.observation, true_state, rng=measurement_rng)
        try:
            belief = pf_update(
                belief,
                control,
                measurement,
                scenario.process,
                scenario.observation,
                seed=int(filter_rng.integers(2**63)),
            )
        except DegenerateBeliefError:
            reason = "filter-degenerate"
            break
        prob = goal_probability(belief, scenario.goal)
        solution = planner.prev_solution
        records.append(
            StepRecord(
                step=step_index,
                true_state=np.array(true_state),
                control=np.array(control),
                observation=np.array(measurement),
                map_estimate=map_estimate(belief),
                goal_probability=prob,
                replanned=planner.last_replanned,
                solver_status=solution.status,
                solver_iterations=solution.iterations,
                plan_cost=solution.cost,
                terminal_residual=solution.terminal_residual,
                solve_time=solve_time,
            )
        )
    else:
        if prob >= scenario.goal.threshold:
            reason = "goal"
    return ExecutionTrace(
        records=tuple(records),
        reason=reason,
        success=reason == "goal",
        final_goal_probability=prob,
        scenario_name=scenario.name,
        seed=config.seed,
        horizon=config.horizon,
        num_particles=config.num_particles,
    )


def resample_path(waypoints, horizon):
    """Resample a waypoint polyline to ``horizon + 1`` states by arc length."""
    points = np.atleast_2d(np.asarray(waypoints, dtype=np.float64))
    if points.shape[0] < 2:
        raise ConfigurationError("a path needs at least two waypoints")
    seg = np.diff(points, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    total = float(lengths.sum())
    if total <= 0:
        return np.repeat(points[:1], horizon + 1, axis=0)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    targets = np.linspace(0.0, total, horizon + 1)
    out = np.empty((horizon + 1, points.shape[1]))
    for i, s in enumerate(targets):
        j = min(np.searchsorted(cum, s, side="right") - 1, len(lengths) - 1)
        frac = 0.0 if lengths[j] == 0 else (s - cum[j]) / lengths[j]
        out[i] = points[j] + frac * seg[j]
    return out


def _rollout(process, x0, controls):
    """Noiseless forward simulation of ``controls`` from ``x0``."""
    states = np.empty((controls.shape[0] + 1, process.n_x))
    states[0] = x0
    zero = process.zero_noise()
    for t in range(controls.shape[0]):
        states[t + 1] = process.f(states[t], controls[t], zero)
    return states
