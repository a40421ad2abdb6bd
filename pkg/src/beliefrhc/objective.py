"""Horizon cost assembly for planning over a particle belief.

The planner's decision variable is the stacked control vector
``U = (u_0, ..., u_{K-1})``.  Around a nominal trajectory the estimate
propagates affinely in ``U``, and the spread of the particle cloud
around the estimate propagates independently of ``U``; this module
precomputes both so that evaluating the cost

    sum_t [ trace(W(x_t) S_t) + u_{t-1}^T V u_{t-1} + beta * penalty(x_t) ]

costs O(K * n_x^2) per call regardless of the particle count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, CostEvaluationError, SingularObservationError


@dataclass(frozen=True)
class ChainProducts:
    """All interval products of the per-step state Jacobians.

    ``product(t1, t2)`` returns ``A_{t2} @ A_{t2-1} @ ... @ A_{t1}`` for
    ``t1 <= t2`` and the identity for ``t1 > t2``.
    """

    A: np.ndarray
    _table: tuple

    def product(self, t1, t2):
        if t1 > t2:
            return np.eye(self.A.shape[1])
        if not (0 <= t1 and t2 < self.A.shape[0]):
            raise ConfigurationError("chain product indices out of range")
        return self._table[t1][t2 - t1]

    def prefix(self, t):
        """Product over steps 0..t-1 (identity for t = 0)."""
        return self.product(0, t - 1)

    @property
    def horizon(self):
        return self.A.shape[0]


def chain_products(lin):
    """Precompute every interval product of ``lin``'s state Jacobians."""
    A = np.array(lin.A, dtype=np.float64)
    horizon, dim = A.shape[0], A.shape[1]
    table = []
    for t1 in range(horizon):
        running = np.eye(dim)
        row = []
        for t2 in range(t1, horizon):
            running = A[t2] @ running
            row.append(running.copy())
        table.append(tuple(row))
    return ChainProducts(A=A, _table=tuple(table))


@dataclass(frozen=True)
class OffsetSummary:
    """Per-step scatter matrices of propagated particle offsets.

    ``S[t] = (1/N) * sum_i off_t^i (off_t^i)^T`` where ``off_0^i`` is
    particle i minus the estimate at plan time and offsets propagate
    through the noiseless linearized dynamics.  Each ``S[t]`` is
    symmetric PSD; the whole summary is O(n_x^2) per step, independent
    of N.
    """

    S: np.ndarray
    num_particles: int

    @property
    def horizon(self):
        return self.S.shape[0] - 1


def offset_summaries(belief, x_map0, chains):
    """Propagated offset scatter matrices for ``belief`` around ``x_map0``.

    Offsets are weighted uniformly (1/N) regardless of the belief's
    current weights; planning normally happens right after a resampling
    step where the two coincide.
    """
    x_map0 = np.asarray(x_map0, dtype=np.float64)
    if x_map0.shape != (belief.dim,):
        raise ConfigurationError("x_map0 dimension does not match the belief")
    offsets = belief.particles - x_map0
    scaled = offsets / np.sqrt(belief.num_particles)
    scatter = kernels.offset_scatter(
        np.ascontiguousarray(scaled), np.ascontiguousarray(chains.A)
    )
    scatter = 0.5 * (scatter + np.swapaxes(scatter, 1, 2))
    return OffsetSummary(S=scatter, num_particles=belief.num_particles)


@dataclass(frozen=True)
class MapTrajectory:
    """Planned estimate trajectory as an affine function of stacked controls.

    ``states(U)[t] = M[t] @ U + m[t]`` reproduces the noiseless
    linearized rollout from the plan-time estimate.
    """

    M: np.ndarray
    m: np.ndarray
    n_u: int

    @property
    def horizon(self):
        return self.M.shape[0] - 1

    @property
    def n_x(self):
        return self.M.shape[1]

    @property
    def num_variables(self):
        return self.M.shape[2]

    def states(self, U):
        U = np.asarray(U, dtype=np.float64).ravel()
        if U.shape != (self.num_variables,):
            raise ConfigurationError(
                f"U has {U.size} entries, expected {self.num_variables}"
            )
        return self.M @ U + self.m

    def terminal_pair(self):
        """(M_K, m_K): the affine map from U to the terminal state."""
        return self.M[-1], self.m[-1]


def map_trajectory(lin, x_map0):
    """Affine estimate propagation along a linearized system."""
    x_map0 = np.asarray(x_map0, dtype=np.float64)
    horizon, n_x, n_u = lin.horizon, lin.n_x, lin.n_u
    if x_map0.shape != (n_x,):
        raise ConfigurationError("x_map0 dimension does not match the system")
    M = np.zeros((horizon + 1, n_x, horizon * n_u))
    m = np.empty((horizon + 1, n_x))
    m[0] = x_map0
    for t in range(horizon):
        M[t + 1] = lin.A[t] @ M[t]
        M[t + 1][:, t * n_u : (t + 1) * n_u] += lin.B[t]
        m[t + 1] = lin.A[t] @ m[t] + lin.drift[t]
    return MapTrajectory(M=M, m=m, n_u=n_u)


@dataclass(frozen=True)
class CostWeights:
    """Cost term weights and solver-facing penalty seeds.

    V                : (n_u, n_u) PSD control effort weight
    beta             : obstacle-penalty switch, 0 or 1
    terminal_penalty : initial quadratic penalty on the terminal equality
    bound_penalty    : initial quartic hinge scale for control bounds
    """

    V: np.ndarray
    beta: int = 0
    terminal_penalty: float = 10.0
    bound_penalty: float = 1.0

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.V, dtype=np.float64))
        if V.shape[0] != V.shape[1]:
            raise ConfigurationError("V must be square")
        if not np.allclose(V, V.T, atol=1e-12):
            raise ConfigurationError("V must be symmetric")
        if np.linalg.eigvalsh(V).min() < -1e-12:
            raise ConfigurationError("V must be positive semidefinite")
        if self.beta not in (0, 1):
            raise ConfigurationError("beta must be 0 or 1")
        if not (self.terminal_penalty > 0 and self.bound_penalty > 0):
            raise ConfigurationError("penalty seeds must be positive")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "beta", int(self.beta))


@dataclass(frozen=True)
class CostContext:
    """Everything needed to evaluate the horizon cost at a control vector."""

    map_traj: MapTrajectory
    offsets: OffsetSummary
    weights: CostWeights
    observation: object
    obstacles: object = None

    def __post_init__(self):
        if self.offsets.S.shape[0] != self.map_traj.horizon + 1:
            raise ConfigurationError("offset summary and trajectory horizons differ")
        if self.offsets.S.shape[1] != self.map_traj.n_x:
            raise ConfigurationError("offset summary dimension mismatch")
        if self.weights.V.shape[0] != self.map_traj.n_u:
            raise ConfigurationError("V dimension does not match the controls")

    @property
    def horizon(self):
        return self.map_traj.horizon

    @property
    def n_u(self):
        return self.map_traj.n_u

    @property
    def n_x(self):
        return self.map_traj.n_x

    @property
    def num_variables(self):
        return self.map_traj.num_variables


def weight_matrix(obs, x_map):
    """State-cost weighting ``H(x)^T R(x) H(x)``; symmetric PSD.

    Raises SingularObservationError where H is undefined.
    """
    wmat = np.asarray(obs.weight_matrix(x_map), dtype=np.float64)
    return 0.5 * (wmat + wmat.T)


def _stage_values(U, ctx):
    """(states, innovation values (K,), control total, obstacle values (K,))."""
    states = ctx.map_traj.states(U)
    innov, _ = ctx.observation.weight_quadratic_path(states[1:], ctx.offsets.S[1:])
    controls = np.asarray(U, dtype=np.float64).reshape(ctx.horizon, ctx.n_u)
    control_total = float(np.einsum("tu,uv,tv->", controls, ctx.weights.V, controls))
    if ctx.weights.beta and ctx.obstacles is not None and ctx.obstacles.num_terms:
        from .obstacles import opf_path

        opf_vals, _, _ = opf_path(ctx.obstacles, states[1:])
    else:
        opf_vals = np.zeros(ctx.horizon)
    return states, innov, control_total, opf_vals


def total_cost(U, ctx):
    """Total horizon cost at stacked controls ``U``.

    Raises CostEvaluationError (with the 1-based step index) if any
    stage value is non-finite.
    """
    _, innov, control_total, opf_vals = _stage_values(U, ctx)
    bad = ~np.isfinite(innov)
    if np.any(bad):
        step = int(np.argmax(bad)) + 1
        raise CostEvaluationError(
            f"non-finite stage cost at horizon step {step}", step=step
        )
    total = float(np.sum(innov)) + control_total + float(np.sum(opf_vals))
    if not np.isfinite(total):
        raise CostEvaluationError("non-finite total cost")
    return total


def cost_breakdown(U, ctx):
    """Cost split into innovation, control, and obstacle terms."""
    _, innov, control_total, opf_vals = _stage_values(U, ctx)
    bad = ~np.isfinite(innov)
    if np.any(bad):
        step = int(np.argmax(bad)) + 1
        raise CostEvaluationError(
            f"non-finite stage cost at horizon step {step}", step=step
        )
    innovation = float(np.sum(innov))
    obstacle = float(np.sum(opf_vals))
    return {
        "innovation": innovation,
        "control": control_total,
        "obstacle": obstacle,
        "total": innovation + control_total + obstacle,
    }


def cost_gradient(U, ctx):
    """Analytic gradient of ``total_cost`` with respect to ``U``.

    At obstacle-penalty tie points the gradient of the lowest-index
    active ellipsoid is used.
    """
    value, grad = cost_value_and_gradient(U, ctx)
    if grad is None:
        raise CostEvaluationError("non-finite cost in gradient evaluation")
    return grad


def cost_value_and_gradient(U, ctx):
    """(value, gradient) in one pass; (inf, None) where the cost is undefined."""
    states = ctx.map_traj.states(U)
    innov, innov_grads = ctx.observation.weight_quadratic_path(
        states[1:], ctx.offsets.S[1:]
    )
    if not np.all(np.isfinite(innov)):
        return np.inf, None
    controls = np.asarray(U, dtype=np.float64).reshape(ctx.horizon, ctx.n_u)
    control_total = float(np.einsum("tu,uv,tv->", controls, ctx.weights.V, controls))
    value = float(np.sum(innov)) + control_total
    state_grads = innov_grads
    if ctx.weights.beta and ctx.obstacles is not None and ctx.obstacles.num_terms:
        from .obstacles import opf_path

        opf_vals, opf_grads, _ = opf_path(ctx.obstacles, states[1:])
        value += float(np.sum(opf_vals))
        state_grads = state_grads + opf_grads
    if not np.isfinite(value):
        return np.inf, None
    grad = np.einsum("tnv,tn->v", ctx.map_traj.M[1:], state_grads)
    grad += (2.0 * (controls @ ctx.weights.V)).ravel()
    return value, grad


@dataclass(frozen=True)
class ConvexityReport:
    """Empirical curvature audit of the per-channel sensitivity l(x).

    For each observation channel k, ``l_k(x) = sqrt(R_k(x)) * (grad
    h_k(x) . d)``.  Midpoint curvature is sampled on random segment
    triples; ``g(x) = d^T W(x) d`` is checked against ``sum_k l_k(x)^2``.
    Verdicts are per channel: affine, convex, concave, or indefinite.
    """

    direction: np.ndarray
    region_lo: np.ndarray
    region_hi: np.ndarray
    samples: int
    verdicts: tuple
    worst_convexity_violation: float
    worst_concavity_violation: float
    max_identity_error: float
    lemma_applies: bool


def lemma1_audit(obs, d, region, samples=1000, seed=0):
    """Sample-based curvature audit of the weighted sensitivity along ``d``.

    region : (lo, hi) box corners inside the model's differentiable domain
    samples: number of segment triples (and identity-check points)

    Returns a ConvexityReport; this is report-only and raises nothing on
    curvature violations.  Sampled points where the model is singular
    are redrawn (up to a bounded number of retries).
    """
    d = np.asarray(d, dtype=np.float64).ravel()
    lo = np.asarray(region[0], dtype=np.float64).ravel()
    hi = np.asarray(region[1], dtype=np.float64).ravel()
    if d.shape != lo.shape or lo.shape != hi.shape:
        raise ConfigurationError("direction and region corners must match in length")
    if np.any(hi < lo):
        raise ConfigurationError("region has hi < lo on some axis")
    if samples < 1:
        raise ConfigurationError("samples must be at least 1")
    rng = np.random.default_rng(seed)

    def sensitivities(x):
        """l_k(x) for every channel, or None at singular points."""
        try:
            rows = obs.jac(x) @ d
            weights = np.sqrt(obs.error_weights(x))
        except SingularObservationError:
            return None
        vals = weights * rows
        return vals if np.all(np.isfinite(vals)) else None

    def draw_point():
        for _ in range(1000):
            x = rng.uniform(lo, hi)
            vals = sensitivities(x)
            if vals is not None:
                return x, vals
        raise ConfigurationError(
            "could not sample a non-singular point in the audit region"
        )

    n_z = obs.n_z
    worst_conv = np.zeros(n_z)
    worst_conc = np.zeros(n_z)
    scale = np.full(n_z, 1.0)
    max_identity_error = 0.0
    for _ in range(samples):
        xa, la = draw_point()
        xb, lb = draw_point()
        mid = 0.5 * (xa + xb)
        lm = sensitivities(mid)
        if lm is None:
            continue
        gap = lm - 0.5 * (la + lb)
        worst_conv = np.maximum(worst_conv, gap)
        worst_conc = np.maximum(worst_conc, -gap)
        scale = np.maximum(scale, np.abs(la))
        scale = np.maximum(scale, np.abs(lb))
        try:
            wmat = weight_matrix(obs, xa)
        except SingularObservationError:
            continue
        identity_err = abs(float(d @ wmat @ d) - float(np.sum(la * la)))
        max_identity_error = max(max_identity_error, identity_err)

    tol = 1e-9 * scale
    verdicts = []
    for k in range(n_z):
        conv_ok = worst_conv[k] <= tol[k]
        conc_ok = worst_conc[k] <= tol[k]
        if conv_ok and conc_ok:
            verdicts.append("affine")
        elif conv_ok:
            verdicts.append("convex")
        elif conc_ok:
            verdicts.append("concave")
        else:
            verdicts.append("indefinite")
    return ConvexityReport(
        direction=d,
        region_lo=lo,
        region_hi=hi,
        samples=samples,
        verdicts=tuple(verdicts),
        worst_convexity_violation=float(worst_conv.max()),
        worst_concavity_violation=float(worst_conc.max()),
        max_identity_error=max_identity_error,
        lemma_applies=all(v != "indefinite" for v in verdicts),
    )
