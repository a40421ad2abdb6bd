"""Particle beliefs: sampling, point estimates, and filtering updates.

A belief is a weighted particle set.  The point estimate used for
planning is the highest-density particle under a Gaussian kernel density
estimate, which tracks the dominant mode of multimodal beliefs instead
of averaging across modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, DegenerateBeliefError

_WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ParticleBelief:
    """Weighted particle approximation of a state distribution.

    particles : (N, n_x) states
    weights   : (N,) nonnegative weights summing to one
    """

    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        particles = np.atleast_2d(np.asarray(self.particles, dtype=np.float64))
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if particles.ndim != 2 or particles.shape[0] == 0:
            raise ConfigurationError("particles must be a nonempty (N, n_x) array")
        if weights.shape != (particles.shape[0],):
            raise ConfigurationError("weights must have one entry per particle")
        if not np.all(np.isfinite(particles)):
            raise ConfigurationError("particles must be finite")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ConfigurationError("weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise ConfigurationError("weights must sum to one")
        object.__setattr__(self, "particles", particles)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, particles):
        """Belief with equal weights on the given particles."""
        particles = np.atleast_2d(np.asarray(particles, dtype=np.float64))
        n = particles.shape[0]
        return cls(particles, np.full(n, 1.0 / n))

    @property
    def num_particles(self):
        return self.particles.shape[0]

    @property
    def dim(self):
        return self.particles.shape[1]

    def mean(self):
        return self.weights @ self.particles

    def ess(self):
        """Effective sample size ``1 / sum(w^2)``."""
        return 1.0 / float(np.sum(self.weights**2))


@dataclass(frozen=True)
class GoalSpec:
    """Goal region and success threshold.

    The goal is the open ball of radius ``radius`` around ``state``; an
    episode succeeds once the belief puts probability above ``threshold``
    on it.
    """

    state: np.ndarray
    radius: float
    threshold: float

    def __post_init__(self):
        state = np.asarray(self.state, dtype=np.float64).ravel()
        if state.size == 0 or not np.all(np.isfinite(state)):
            raise ConfigurationError("goal state must be a finite vector")
        if not self.radius > 0:
            raise ConfigurationError("goal radius must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigurationError("goal threshold must lie in (0, 1)")
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "threshold", float(self.threshold))


@dataclass(frozen=True)
class GaussianMixture:
    """Finite Gaussian mixture used to describe initial beliefs.

    weights : (k,) mixture weights summing to one
    means   : (k, n_x) component means
    covs    : (k, n_x, n_x) positive semidefinite covariances
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        covs = np.asarray(self.covs, dtype=np.float64)
        k, dim = means.shape
        if covs.shape != (k, dim, dim):
            raise ConfigurationError("covs must have shape (k, n_x, n_x)")
        if weights.shape != (k,) or np.any(weights < 0):
            raise ConfigurationError("weights must be (k,) and nonnegative")
        if abs(weights.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise ConfigurationError("mixture weights must sum to one")
        roots = np.empty_like(covs)
        for i in range(k):
            sym = 0.5 * (covs[i] + covs[i].T)
            if not np.allclose(covs[i], sym, atol=1e-10):
                raise ConfigurationError("covariances must be symmetric")
            eigval, eigvec = np.linalg.eigh(sym)
            scale = max(1.0, float(np.max(np.abs(eigval))))
            if np.any(eigval < -1e-10 * scale):
                raise ConfigurationError(
                    "covariances must be positive semidefinite"
                )
            roots[i] = eigvec @ (np.sqrt(np.clip(eigval, 0.0, None))[:, None] * eigvec.T)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "_roots", roots)

    @classmethod
    def from_spherical(cls, weights, means, variances):
        """Mixture with isotropic components ``variance_i * I``."""
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        variances = np.asarray(variances, dtype=np.float64).ravel()
        dim = means.shape[1]
        covs = np.array([v * np.eye(dim) for v in variances])
        return cls(weights, means, covs)

    @property
    def dim(self):
        return self.means.shape[1]


def sample_initial_belief(mixture, num_particles, seed):
    """Draw an equal-weight particle belief from a Gaussian mixture."""
    if num_particles < 1:
        raise ConfigurationError("num_particles must be at least 1")
    rng = np.random.default_rng(seed)
    comp = rng.choice(mixture.weights.size, size=num_particles, p=mixture.weights)
    normals = rng.standard_normal((num_particles, mixture.dim))
    roots = getattr(mixture, "_roots")
    particles = mixture.means[comp] + np.einsum("nij,nj->ni", roots[comp], normals)
    return ParticleBelief.uniform(particles)


def _silverman_bandwidths(belief):
    """Per-dimension Gaussian-KDE bandwidths (Silverman's rule)."""
    mean = belief.mean()
    centered = belief.particles - mean
    var = belief.weights @ (centered * centered)
    sigma = np.sqrt(var)
    n, d = belief.num_particles, belief.dim
    factor = (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * n ** (-1.0 / (d + 4.0))
    bw = factor * sigma
    floor = 1e-9 * (1.0 + np.abs(mean))
    return np.maximum(bw, floor)


def map_estimate(belief, bandwidth=None, max_exact=4096, seed=0):
    """Highest-density particle under a Gaussian kernel density estimate.

    The density is evaluated at every particle and the best particle is
    returned (a copy).  ``bandwidth`` may be a scalar or per-dimension
    vector; by default Silverman's rule is applied per dimension.  For
    beliefs larger than ``max_exact`` the density is evaluated against an
    equal-weight subsample of 2048 support points drawn by systematic
    resampling (deterministic for a fixed ``seed``), keeping the cost of
    the estimate quadratic only up to that cap.
    """
    if bandwidth is None:
        bw = _silverman_bandwidths(belief)
    else:
        bw = np.broadcast_to(
            np.asarray(bandwidth, dtype=np.float64), (belief.dim,)
        ).copy()
        if np.any(bw <= 0):
            raise ConfigurationError("bandwidth must be positive")
    inv_bw2 = 1.0 / (bw * bw)
    particles = np.ascontiguousarray(belief.particles)
    if belief.num_particles <= max_exact:
        support = particles
        support_weights = np.ascontiguousarray(belief.weights)
    else:
        u0 = np.random.default_rng(seed).uniform()
        size = 2048
        positions = (u0 + np.arange(size)) / size
        cumulative = np.cumsum(belief.weights)
        cumulative[-1] = 1.0
        idx = np.searchsorted(cumulative, positions)
        support = np.ascontiguousarray(particles[idx])
        support_weights = np.full(size, 1.0 / size)
    scores = kernels.kde_scores(support, particles, support_weights, inv_bw2)
    return particles[int(np.argmax(scores))].copy()


def goal_probability(belief, goal):
    """Belief probability of the goal ball."""
    diff = belief.particles - goal.state
    inside = np.einsum("nd,nd->n", diff, diff) < goal.radius**2
    return float(belief.weights[inside].sum())


def pf_update(belief, control, measurement, process, observation, seed):
    """One propagate/weight/resample step of a particle filter.

    Particles are pushed through the process model with sampled noise,
    reweighted by the measurement likelihood, and resampled
    (systematically) when the effective sample size drops below N/2.
    If every likelihood underflows to zero the weighting is retried once
    with the measurement-noise variances inflated tenfold; if that also
    fails a DegenerateBeliefError is raised.
    """
    rng = np.random.default_rng(seed)
    control = np.asarray(control, dtype=np.float64)
    measurement = np.asarray(measurement, dtype=np.float64)
    n = belief.num_particles
    noises = process.sample_noise(rng, size=n)
    propagated = process.propagate(belief.particles, control, noises)
    if not np.all(np.isfinite(propagated)):
        raise DegenerateBeliefError("propagation produced non-finite particles")

    residuals = observation.innovation(measurement, observation.h_batch(propagated))
    variances = observation.noise_variances_batch(propagated)
    loglik = kernels.diag_gauss_loglik(
        np.ascontiguousarray(residuals), np.ascontiguousarray(variances)
    )
    log_weights = np.log(belief.weights, where=belief.weights > 0,
                         out=np.full(n, -np.inf)) + loglik

    new_weights = _normalize_log_weights(log_weights)
    if new_weights is None:
        loglik = kernels.diag_gauss_loglik(
            np.ascontiguousarray(residuals), np.ascontiguousarray(10.0 * variances)
        )
        log_weights = np.log(belief.weights, where=belief.weights > 0,
                             out=np.full(n, -np.inf)) + loglik
        new_weights = _normalize_log_weights(log_weights)
        if new_weights is None:
            raise DegenerateBeliefError(
                "all particle weights vanished in the measurement update"
            )

    ess = 1.0 / float(np.sum(new_weights**2))
    if ess < n / 2.0:
        idx = kernels.systematic_resample(
            np.ascontiguousarray(new_weights), rng.uniform()
        )
        propagated = propagated[idx]
        new_weights = np.full(n, 1.0 / n)
    return ParticleBelief(propagated, new_weights)


def _normalize_log_weights(log_weights):
    top = np.max(log_weights)
    if not np.isfinite(top):
        return None
    weights = np.exp(log_weights - top)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        return None
    return weights / total
