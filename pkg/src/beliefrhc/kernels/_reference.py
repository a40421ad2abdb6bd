"""Numpy reference implementations of the numerical kernels.

These are the fallback used when the compiled extension is unavailable;
they also serve as the ground truth the compiled kernels are tested
against.  All functions expect C-contiguous float64 arrays.
"""

import numpy as np

LOG_TWO_PI = float(np.log(2.0 * np.pi))


def kde_scores(points, queries, weights, inv_bw2):
    """Unnormalized weighted Gaussian product-kernel scores.

    points   : (N, d) sample locations
    queries  : (M, d) evaluation locations
    weights  : (N,)   nonnegative sample weights
    inv_bw2  : (d,)   per-dimension inverse squared bandwidths

    Returns (M,) scores ``sum_n w_n * exp(-0.5 * sum_d inv_bw2_d * (q - p_n)_d^2)``.
    The shared normalization constant is omitted; rankings are unaffected.
    Queries are processed in blocks to bound peak memory.
    """
    points = np.asarray(points, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    inv_bw2 = np.asarray(inv_bw2, dtype=np.float64)
    num_queries = queries.shape[0]
    block = max(1, min(num_queries, 2**22 // max(points.shape[0], 1) + 1))
    out = np.empty(num_queries)
    for start in range(0, num_queries, block):
        chunk = queries[start : start + block]
        diff = chunk[:, None, :] - points[None, :, :]
        expo = -0.5 * np.einsum("mnd,d->mn", diff * diff, inv_bw2)
        out[start : start + block] = np.exp(expo) @ weights
    return out


def offset_scatter(offsets, mats):
    """Second-moment blocks of linearly propagated offset vectors.

    offsets : (N, n) offsets at step 0, already scaled by the caller
    mats    : (K, n, n) per-step propagation matrices

    Returns (K+1, n, n) with ``S[t] = D_t^T D_t`` where ``D_0 = offsets``
    and ``D_{t+1} = D_t @ mats[t]^T``.
    """
    offsets = np.asarray(offsets, dtype=np.float64)
    num_steps = mats.shape[0]
    dim = offsets.shape[1]
    out = np.empty((num_steps + 1, dim, dim))
    cur = offsets
    out[0] = cur.T @ cur
    for t in range(num_steps):
        cur = cur @ mats[t].T
        out[t + 1] = cur.T @ cur
    return out


def systematic_resample(weights, u0):
    """Systematic resampling indices for normalized weights.

    weights : (N,) normalized weights
    u0      : scalar in [0, 1)

    Returns (N,) int64 indices; index i is drawn for the grid position
    ``(u0 + i) / N`` against the cumulative weight distribution.
    """
    n = weights.shape[0]
    positions = (u0 + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="left").astype(np.int64)


def diag_gauss_loglik(residuals, variances):
    """Log-density of zero-mean independent Gaussian residuals.

    residuals : (N, m)
    variances : (N, m) positive variances

    Returns (N,) log-likelihoods.
    """
    return -0.5 * np.sum(
        residuals * residuals / variances + np.log(variances) + LOG_TWO_PI, axis=1
    )


def opf_path(states, centers, alphas, magnitude):
    """Obstacle penalty values and gradients along a path of states.

    states    : (T, n) query states
    centers   : (B, n) ellipsoid centers
    alphas    : (B, n) positive per-axis curvature parameters
    magnitude : scalar peak value of each penalty term

    The penalty at x is ``magnitude * max_b exp(-sum_d alphas[b,d] * (x - centers[b])_d^2)``.
    Returns ``(values (T,), grads (T, n), argmax (T,) int64)``.  With zero
    ellipsoids the values and gradients are zero and argmax is -1.
    """
    num_states, dim = states.shape
    num_obst = centers.shape[0]
    if num_obst == 0:
        return (
            np.zeros(num_states),
            np.zeros((num_states, dim)),
            np.full(num_states, -1, dtype=np.int64),
        )
    diff = states[:, None, :] - centers[None, :, :]
    quad = np.einsum("tbd,bd->tb", diff * diff, alphas)
    best = np.argmin(quad, axis=1)
    rows = np.arange(num_states)
    values = magnitude * np.exp(-quad[rows, best])
    grads = values[:, None] * (-2.0 * alphas[best] * diff[rows, best])
    return values, grads, best.astype(np.int64)
