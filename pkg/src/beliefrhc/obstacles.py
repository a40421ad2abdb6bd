"""Soft obstacle penalties built from axis-aligned Gaussian bumps.

Each ellipsoid contributes a term ``magnitude * exp(-sum_d alpha_d *
(x_d - c_d)^2)``; the penalty field value at a state is the maximum over
all terms.  A state is *covered* by a term when the term's quadratic
form is at most one, i.e. the penalty there is at least ``magnitude/e``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError

# Quadratic value at which a term has decayed to 1e-6 of its magnitude.
_DECAY_QUAD = math.log(1e6)


@dataclass(frozen=True)
class Ellipsoid:
    """One axis-aligned Gaussian penalty term.

    center : (n,) peak location
    alpha  : (n,) positive per-axis curvatures
    """

    center: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).ravel()
        alpha = np.asarray(self.alpha, dtype=np.float64).ravel()
        if center.size == 0 or center.shape != alpha.shape:
            raise ConfigurationError("center and alpha must be equal-length vectors")
        if not np.all(np.isfinite(center)):
            raise ConfigurationError("center must be finite")
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
            raise ConfigurationError("alpha entries must be positive and finite")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "alpha", alpha)

    def quad(self, x):
        """Quadratic form ``sum_d alpha_d * (x_d - center_d)^2``."""
        diff = np.asarray(x, dtype=np.float64) - self.center
        return float(np.sum(self.alpha * diff * diff))


@dataclass(frozen=True)
class ObstacleSet:
    """Max-combined collection of Gaussian penalty terms with one magnitude.

    An empty set is allowed; its penalty field is identically zero.
    """

    ellipsoids: tuple
    magnitude: float

    def __post_init__(self):
        terms = tuple(self.ellipsoids)
        if not self.magnitude > 0:
            raise ConfigurationError("magnitude must be positive")
        dims = {e.center.size for e in terms}
        if len(dims) > 1:
            raise ConfigurationError("all ellipsoids must share one dimension")
        object.__setattr__(self, "ellipsoids", terms)
        object.__setattr__(self, "magnitude", float(self.magnitude))
        if terms:
            centers = np.ascontiguousarray([e.center for e in terms])
            alphas = np.ascontiguousarray([e.alpha for e in terms])
        else:
            centers = np.zeros((0, 0))
            alphas = np.zeros((0, 0))
        object.__setattr__(self, "_centers", centers)
        object.__setattr__(self, "_alphas", alphas)

    @property
    def num_terms(self):
        return len(self.ellipsoids)

    def stacked(self):
        """(centers (B, n), alphas (B, n)) arrays over all terms."""
        return getattr(self, "_centers"), getattr(self, "_alphas")

    def merged_with(self, other):
        """Union of two sets sharing the same magnitude."""
        if other.magnitude != self.magnitude:
            raise ConfigurationError("merged obstacle sets must share one magnitude")
        return ObstacleSet(self.ellipsoids + other.ellipsoids, self.magnitude)


def opf_value(obstacle_set, x):
    """Penalty field value at a single state (0 for an empty set)."""
    values, _, _ = opf_path(obstacle_set, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    return float(values[0])


def opf_grad(obstacle_set, x):
    """Gradient of the penalty field at a single state.

    Uses the gradient of the active (maximal) term; ties take the lowest
    index.  Zero for an empty set.
    """
    _, grads, _ = opf_path(obstacle_set, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    return grads[0]


def opf_path(obstacle_set, states):
    """Values, gradients, and active-term indices along a path of states."""
    states = np.ascontiguousarray(states, dtype=np.float64)
    centers, alphas = obstacle_set.stacked()
    if obstacle_set.num_terms and states.shape[1] != centers.shape[1]:
        raise ConfigurationError("state dimension does not match the obstacle set")
    return kernels.opf_path(states, centers, alphas, obstacle_set.magnitude)


def coverage_margin(obstacle_set, x):
    """Max over terms of ``1 - quad(x)``; nonnegative iff x is covered.

    Returns -inf for an empty set.
    """
    x = np.asarray(x, dtype=np.float64)
    if not obstacle_set.num_terms:
        return -np.inf
    centers, alphas = obstacle_set.stacked()
    diff = x[None, :] - centers
    quads = np.einsum("bd,bd->b", diff * diff, alphas)
    return float(1.0 - np.min(quads))


def cover_walls(wall, spacing, margin, magnitude):
    """Cover one axis-aligned rectangle with Gaussian penalty terms.

    wall      : (lo, hi) corner vectors, each (n,), with lo <= hi
    spacing   : requested center-to-center grid spacing (upper bound)
    margin    : distance outside the rectangle at which the field has
                decayed to at most 1e-6 of ``magnitude``
    magnitude : peak value of every term

    Term centers are laid on a per-axis grid including both faces (a
    single mid-line on axes short enough to need only one).  Curvatures
    are sized so that every rectangle point is covered (quadratic form
    <= 1 for the nearest term) while each term still decays to the 1e-6
    level within ``margin``; the grid is refined beyond ``spacing`` where
    those two requirements conflict.  Zero-extent axes are allowed, so a
    degenerate rectangle yields a single point obstacle.
    """
    if not magnitude > 0:
        raise ConfigurationError("magnitude must be positive")
    if not spacing > 0:
        raise ConfigurationError("spacing must be positive")
    if not margin > 0:
        raise ConfigurationError("margin must be positive")
    lo, hi = wall
    lo = np.asarray(lo, dtype=np.float64).ravel()
    hi = np.asarray(hi, dtype=np.float64).ravel()
    if lo.shape != hi.shape or lo.size == 0:
        raise ConfigurationError("rectangle corners must be equal-length vectors")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ConfigurationError("rectangle corners must be finite")
    if np.any(hi < lo):
        raise ConfigurationError("rectangle has hi < lo on some axis")
    return ObstacleSet(tuple(_cover_one(lo, hi, spacing, margin)), magnitude)


def _cover_one(lo, hi, spacing, margin):
    extents = hi - lo
    active = int(np.count_nonzero(extents > 0))
    budget = max(active, 1)
    # Largest per-axis half-gap such that alpha = 1/(budget * half_gap^2)
    # still reaches the 1e-6 decay level within `margin`.
    half_cap = min(margin / math.sqrt(budget * _DECAY_QUAD), spacing / 2.0)
    axes = []
    alphas = []
    for d in range(lo.size):
        extent = extents[d]
        if extent <= 2.0 * half_cap:
            count = 1
            half_gap = extent / 2.0
        else:
            count = math.ceil(extent / (2.0 * half_cap)) + 1
            half_gap = extent / (2.0 * (count - 1))
        if half_gap > 0:
            alpha = 1.0 / (budget * half_gap**2)
        else:
            alpha = _DECAY_QUAD / margin**2
        if count == 1:
            axes.append(np.array([0.5 * (lo[d] + hi[d])]))
        else:
            axes.append(np.linspace(lo[d], hi[d], count))
        alphas.append(alpha)
    alpha_vec = np.array(alphas)
    return [
        Ellipsoid(np.array(center), alpha_vec)
        for center in itertools.product(*axes)
    ]
