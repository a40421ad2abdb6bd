"""Inner trajectory optimizer for the horizon planning problem.

Minimizes the assembled horizon cost over the stacked control vector
subject to an affine terminal equality (planned estimate reaches the
goal) and optional per-step control-magnitude bounds.  The equality is
handled by an augmented-Lagrangian outer loop; each outer round runs a
limited-memory BFGS descent with Armijo backtracking on the smooth
total.  Control bounds are enforced by projecting every line-search
candidate onto the per-step ``u_max`` ball, so iterates are always
bound-feasible; a quartic hinge penalty on ``||u_t||^2 - u_max^2``
remains in the merit as a guard for bound-violating starting points,
and the returned controls are projected once more for good measure.
The problem size is K*n_u regardless of the particle count; the belief
enters only through the precomputed cost context.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SolverInitializationError
from .objective import cost_breakdown, cost_value_and_gradient

_MAX_OUTER = 30
_INNER_BUDGET = 500
_MEMORY = 10
_PENALTY_CAP = 1e14
_BOUND_TOL = 1e-12
_BOUND_GATE = 1e-6


@dataclass(frozen=True)
class PlanProblem:
    """One horizon optimization instance.

    ctx            : cost context (trajectory map, offset summary, weights)
    goal_state     : (n_x,) terminal target for the planned estimate
    u_max          : optional per-step Euclidean bound on controls
    ftol           : declare convergence when an outer round improves the
                     true cost by less than this (and the residual passes)
    ctol           : terminal equality residual tolerance
    max_iterations : cap on total inner descent iterations
    U0             : initial stacked controls; defaults to the least-norm
                     solution of the terminal equality
    multi_start    : also try the least-norm and zero starts and keep the
                     best result (useful when obstacle penalties create
                     local minima)
    on_round       : optional callback receiving a per-round diagnostic
                     record (dict with round, inner iterations, cost,
                     residual)
    """

    ctx: object
    goal_state: np.ndarray
    u_max: float = None
    ftol: float = 2e-3
    ctol: float = 1e-8
    max_iterations: int = 20000
    U0: np.ndarray = None
    multi_start: bool = False
    on_round: object = field(default=None, compare=False)

    def __post_init__(self):
        goal = np.asarray(self.goal_state, dtype=np.float64).ravel()
        if goal.shape != (self.ctx.n_x,):
            raise ConfigurationError("goal state dimension does not match the context")
        if not (self.ftol > 0 and self.ctol > 0):
            raise ConfigurationError("tolerances must be positive")
        if self.u_max is not None and not self.u_max > 0:
            raise ConfigurationError("u_max must be positive when set")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be at least 1")
        object.__setattr__(self, "goal_state", goal)
        if self.U0 is not None:
            U0 = np.asarray(self.U0, dtype=np.float64).ravel()
            if U0.shape != (self.ctx.num_variables,):
                raise ConfigurationError(
                    f"U0 has {U0.size} entries, expected {self.ctx.num_variables}"
                )
            object.__setattr__(self, "U0", U0)


@dataclass(frozen=True)
class PlanSolution:
    """Result of one ``solve`` call.

    ``iterations`` counts inner descent iterations across all outer
    rounds and starts.  ``stationarity`` is the norm of the true-cost
    gradient projected onto the terminal equality's null space (active
    control bounds are not deducted).  All numeric fields are
    deterministic for identical problems; ``wall_time`` is measured and
    excluded from that guarantee.
    """

    controls: np.ndarray
    map_states: np.ndarray
    cost: float
    breakdown: dict
    terminal_residual: float
    iterations: int
    wall_time: float
    converged: bool
    status: str
    stationarity: float
    start_index: int


def problem_size(problem):
    """Optimization dimensions: independent of the particle count.

    The terminal equality contributes n_x scalar rows; when a control
    bound is set, each step adds one penalty row.
    """
    ctx = problem.ctx
    rows = ctx.n_x + (ctx.horizon if problem.u_max is not None else 0)
    return {
        "num_variables": ctx.num_variables,
        "num_constraint_rows": rows,
    }


def warm_start(previous):
    """Shift a solution one step: drop the first control, repeat the last."""
    controls = previous.controls
    return np.vstack([controls[1:], controls[-1:]])


def least_norm_controls(ctx, goal_state):
    """Minimum-norm stacked controls meeting the terminal equality."""
    term_M, term_m = ctx.map_traj.terminal_pair()
    return np.linalg.pinv(term_M) @ (np.asarray(goal_state) - term_m)


def straight_line_controls(lin, x_start, x_goal):
    """Per-step least-squares controls tracking the straight state path.

    For each step the control minimizes the linearized deviation from
    the straight-line interpolation between ``x_start`` and ``x_goal``.
    """
    x_start = np.asarray(x_start, dtype=np.float64)
    x_goal = np.asarray(x_goal, dtype=np.float64)
    horizon = lin.horizon
    line = x_start + np.outer(np.arange(horizon + 1) / horizon, x_goal - x_start)
    controls = np.empty((horizon, lin.n_u))
    for t in range(horizon):
        target = line[t + 1] - lin.A[t] @ line[t] - lin.drift[t]
        controls[t] = np.linalg.lstsq(lin.B[t], target, rcond=None)[0]
    return controls


def path_tracking_controls(lin, waypoints_states):
    """Per-step least-squares controls tracking a given state path."""
    states = np.asarray(waypoints_states, dtype=np.float64)
    if states.shape != (lin.horizon + 1, lin.n_x):
        raise ConfigurationError("state path must have shape (K+1, n_x)")
    controls = np.empty((lin.horizon, lin.n_u))
    for t in range(lin.horizon):
        target = states[t + 1] - lin.A[t] @ states[t] - lin.drift[t]
        controls[t] = np.linalg.lstsq(lin.B[t], target, rcond=None)[0]
    return controls


def solve(problem):
    """Solve one horizon planning instance.

    Returns the best solution across the configured starts (converged
    results preferred, then lower cost, then lower start index).  When
    every configured start has non-finite cost (e.g. a warm start whose
    trajectory enters a region where the observation weighting is
    undefined), the canonical least-norm and zero starts are tried as a
    fallback.  Raises SolverInitializationError only if the cost is
    non-finite at every one of those starts too.
    """
    t_begin = time.perf_counter()
    ctx = problem.ctx
    starts, fallbacks = _build_starts(problem)
    candidates = []
    iterations_used = 0

    def attempt(U0, index):
        nonlocal iterations_used
        value, _ = cost_value_and_gradient(U0, ctx)
        if not np.isfinite(value):
            return
        budget = problem.max_iterations - iterations_used
        if budget < 1:
            return
        result = _solve_single(problem, U0, index, budget)
        iterations_used += result["iterations"]
        candidates.append(result)

    for index, U0 in enumerate(starts):
        attempt(U0, index)
    if not candidates:
        for offset, U0 in enumerate(fallbacks):
            attempt(U0, len(starts) + offset)
    if not candidates:
        raise SolverInitializationError(
            "objective is non-finite at every starting point"
        )
    best = min(
        candidates,
        key=lambda r: (not r["converged"], r["cost"], r["start_index"]),
    )
    wall = time.perf_counter() - t_begin
    return PlanSolution(
        controls=best["controls"],
        map_states=best["map_states"],
        cost=best["cost"],
        breakdown=best["breakdown"],
        terminal_residual=best["residual"],
        iterations=iterations_used,
        wall_time=wall,
        converged=best["converged"],
        status=best["status"],
        stationarity=best["stationarity"],
        start_index=best["start_index"],
    )


def _build_starts(problem):
    """Configured starting points plus emergency fallbacks.

    Returns (starts, fallbacks): ``starts`` is the primary start plus,
    under ``multi_start``, the least-norm and zero starts; ``fallbacks``
    holds whichever of those canonical starts are not already in
    ``starts`` and is consulted only if every primary start is
    infeasible.
    """
    ctx = problem.ctx
    least_norm = least_norm_controls(ctx, problem.goal_state)
    canonical = (least_norm, np.zeros(ctx.num_variables))
    primary = least_norm if problem.U0 is None else problem.U0
    starts = [primary]
    if problem.multi_start:
        for candidate in canonical:
            if not any(
                np.array_equal(candidate, existing) for existing in starts
            ):
                starts.append(candidate)
    fallbacks = [
        candidate
        for candidate in canonical
        if not any(np.array_equal(candidate, existing) for existing in starts)
    ]
    return starts, fallbacks


def _solve_single(problem, U0, start_index, iteration_budget):
    ctx = problem.ctx
    horizon, n_u = ctx.horizon, ctx.n_u
    term_M, term_m = ctx.map_traj.terminal_pair()
    goal = problem.goal_state
    u_max_sq = None if problem.u_max is None else problem.u_max**2

    def constraint(U):
        return term_M @ U + term_m - goal

    lam = np.zeros(goal.size)
    mu = ctx.weights.terminal_penalty
    rho = ctx.weights.bound_penalty

    def merit_and_grad(U):
        value, grad = cost_value_and_gradient(U, ctx)
        if grad is None:
            return np.inf, None
        c = constraint(U)
        value = value + lam @ c + 0.5 * mu * (c @ c)
        grad = grad + term_M.T @ (lam + mu * c)
        if u_max_sq is not None:
            blocks = U.reshape(horizon, n_u)
            excess = np.maximum(np.einsum("tu,tu->t", blocks, blocks) - u_max_sq, 0.0)
            value += rho * float(np.sum(excess**2))
            grad = grad + (4.0 * rho * excess[:, None] * blocks).ravel()
        if not np.isfinite(value):
            return np.inf, None
        return value, grad

    if problem.u_max is None:
        project = None
    else:
        def project(vec):
            return _project_controls(vec, horizon, n_u, problem.u_max)

    U = np.array(U0, dtype=np.float64)
    if project is not None:
        U = project(U)
    f_true, _ = cost_value_and_gradient(U, ctx)
    total_inner = 0
    cnorm_prev = np.inf
    status = "max-iterations"
    converged = False
    gscale = None
    for outer in range(_MAX_OUTER):
        budget = min(_INNER_BUDGET, iteration_budget - total_inner)
        if budget < 1:
            break
        if gscale is None:
            _, g0 = merit_and_grad(U)
            gscale = max(1.0, float(np.max(np.abs(g0)))) if g0 is not None else 1.0
        gtol = max(1e-4 * 0.1**outer, 1e-12) * gscale
        U, inner_iters = _lbfgs(merit_and_grad, U, gtol, budget, project=project)
        total_inner += inner_iters
        if u_max_sq is None:
            bound_viol = 0.0
            bound_ok = True
        else:
            blocks = U.reshape(horizon, n_u)
            bound_viol = float(
                np.max(
                    np.maximum(
                        np.einsum("tu,tu->t", blocks, blocks) - u_max_sq, 0.0
                    )
                )
            )
            bound_ok = bound_viol <= _BOUND_GATE * max(1.0, u_max_sq)
        projected = _project_controls(U, horizon, n_u, problem.u_max)
        c_proj = constraint(projected)
        cnorm = float(np.linalg.norm(c_proj))
        f_new, _ = cost_value_and_gradient(projected, ctx)
        decrease = abs(f_true - f_new)
        f_true = f_new
        if problem.on_round is not None:
            problem.on_round(
                {
                    "start": start_index,
                    "round": outer,
                    "inner_iterations": inner_iters,
                    "cost": f_new,
                    "residual": cnorm,
                    "bound_violation": bound_viol,
                }
            )
        # The projected point is only a faithful image of the solver's
        # iterate once the bound penalty has actually enforced the bound;
        # converging earlier would report a projection-distorted result.
        if decrease < problem.ftol and cnorm <= problem.ctol and bound_ok:
            status = "converged"
            converged = True
            break
        if total_inner >= iteration_budget:
            break
        c_raw = constraint(U)
        cnorm_raw = float(np.linalg.norm(c_raw))
        lam = lam + mu * c_raw
        if cnorm_raw > 0.25 * cnorm_prev:
            mu = min(mu * 10.0, _PENALTY_CAP)
        cnorm_prev = cnorm_raw
        if u_max_sq is not None and bound_viol > _BOUND_TOL * max(1.0, u_max_sq):
            rho = min(rho * 10.0, _PENALTY_CAP)

    final = _project_controls(U, horizon, n_u, problem.u_max)
    states = ctx.map_traj.states(final)
    residual = float(np.linalg.norm(states[-1] - goal))
    breakdown = cost_breakdown(final, ctx)
    return {
        "controls": final.reshape(horizon, n_u),
        "map_states": states,
        "cost": breakdown["total"],
        "breakdown": breakdown,
        "residual": residual,
        "iterations": total_inner,
        "converged": converged,
        "status": status,
        "stationarity": _stationarity(final, ctx, term_M),
        "start_index": start_index,
    }


def _project_controls(U, horizon, n_u, u_max):
    if u_max is None:
        return np.array(U, dtype=np.float64)
    blocks = np.array(U, dtype=np.float64).reshape(horizon, n_u)
    norms = np.linalg.norm(blocks, axis=1)
    over = norms > u_max
    if np.any(over):
        blocks[over] *= (u_max / norms[over])[:, None]
    return blocks.ravel()


def _stationarity(U, ctx, term_M):
    """Norm of the cost gradient projected onto the equality's null space."""
    _, grad = cost_value_and_gradient(U, ctx)
    if grad is None:
        return np.inf
    multipliers, *_ = np.linalg.lstsq(term_M.T, grad, rcond=None)
    return float(np.linalg.norm(grad - term_M.T @ multipliers))


def _lbfgs(fun_grad, x0, gtol, max_iter, project=None):
    """Limited-memory BFGS descent with Armijo backtracking.

    Returns (best point, iterations used).  The caller guarantees a
    finite objective at ``x0``.  When ``project`` is given, every
    line-search candidate is projected onto the feasible set and the
    Armijo test uses the actual (projected) displacement, so iterates
    never leave the set.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun_grad(x)
    if g is None:
        return x, 0
    s_hist, y_hist, rho_hist = [], [], []
    iterations = 0
    for _ in range(max_iter):
        if float(np.max(np.abs(g))) <= gtol:
            break
        direction = _two_loop(g, s_hist, y_hist, rho_hist)
        slope = float(g @ direction)
        if not np.all(np.isfinite(direction)) or slope >= 0.0:
            direction = -g
            slope = -float(g @ g)
            s_hist, y_hist, rho_hist = [], [], []
        step = 1.0
        accepted = False
        for _ in range(60):
            x_new = x + step * direction
            if project is not None:
                x_new = project(x_new)
                decrease_bound = float(g @ (x_new - x))
                if decrease_bound >= 0.0:
                    step *= 0.5
                    continue
            else:
                decrease_bound = step * slope
            f_new, g_new = fun_grad(x_new)
            if g_new is not None and f_new <= f + 1e-4 * decrease_bound:
                accepted = True
                break
            step *= 0.5
        iterations += 1
        if not accepted:
            break
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > _MEMORY:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        x, f, g = x_new, f_new, g_new
    return x, iterations


def _two_loop(g, s_hist, y_hist, rho_hist):
    q = -np.array(g, dtype=np.float64)
    if not s_hist:
        return q
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        alpha = rho * float(s @ q)
        alphas.append(alpha)
        q -= alpha * y
    y_last = y_hist[-1]
    gamma = float(s_hist[-1] @ y_last) / float(y_last @ y_last)
    q *= gamma
    for (s, y, rho), alpha in zip(
        zip(s_hist, y_hist, rho_hist), reversed(alphas)
    ):
        beta = rho * float(y @ q)
        q += (alpha - beta) * s
    return q
