# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the numerical kernels.

Drop-in replacements for :mod:`beliefrhc.kernels._reference`; see that
module for the contracts.  Inputs are coerced to C-contiguous float64.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

cdef double LOG_TWO_PI = 1.8378770664093453


def kde_scores(points, queries, weights, inv_bw2):
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] q = np.ascontiguousarray(queries, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef double[::1] ib = np.ascontiguousarray(inv_bw2, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], m = q.shape[0], d = p.shape[1]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j, k
    cdef double acc, diff, expo
    for i in range(m):
        acc = 0.0
        for j in range(n):
            expo = 0.0
            for k in range(d):
                diff = q[i, k] - p[j, k]
                expo += ib[k] * diff * diff
            acc += w[j] * exp(-0.5 * expo)
        ov[i] = acc
    return out


def offset_scatter(offsets, mats):
    cdef double[:, ::1] cv = np.array(offsets, dtype=np.float64, copy=True, order="C")
    cdef double[:, :, ::1] mv = np.ascontiguousarray(mats, dtype=np.float64)
    cdef Py_ssize_t n_pts = cv.shape[0], dim = cv.shape[1], num_steps = mv.shape[0]
    out = np.zeros((num_steps + 1, dim, dim), dtype=np.float64)
    scratch = np.empty((n_pts, dim), dtype=np.float64)
    cdef double[:, :, ::1] ov = out
    cdef double[:, ::1] nv = scratch
    cdef double[:, ::1] tmp
    cdef Py_ssize_t t, i, r, c
    cdef double acc
    for i in range(n_pts):
        for r in range(dim):
            for c in range(r + 1):
                ov[0, r, c] += cv[i, r] * cv[i, c]
    for r in range(dim):
        for c in range(r):
            ov[0, c, r] = ov[0, r, c]
    for t in range(num_steps):
        for i in range(n_pts):
            for r in range(dim):
                acc = 0.0
                for c in range(dim):
                    acc += mv[t, r, c] * cv[i, c]
                nv[i, r] = acc
        tmp = cv
        cv = nv
        nv = tmp
        for i in range(n_pts):
            for r in range(dim):
                for c in range(r + 1):
                    ov[t + 1, r, c] += cv[i, r] * cv[i, c]
        for r in range(dim):
            for c in range(r):
                ov[t + 1, c, r] = ov[t + 1, r, c]
    return out


def systematic_resample(weights, u0):
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef double u = u0
    cdef Py_ssize_t n = w.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    cdef double cum = w[0]
    cdef double pos
    cdef Py_ssize_t i, j = 0
    for i in range(n):
        pos = (u + i) / n
        while cum < pos and j < n - 1:
            j += 1
            cum += w[j]
        ov[i] = j
    return out


def diag_gauss_loglik(residuals, variances):
    cdef double[:, ::1] r = np.ascontiguousarray(residuals, dtype=np.float64)
    cdef double[:, ::1] v = np.ascontiguousarray(variances, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0], m = r.shape[1]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(n):
        acc = 0.0
        for k in range(m):
            acc += r[i, k] * r[i, k] / v[i, k] + log(v[i, k]) + LOG_TWO_PI
        ov[i] = -0.5 * acc
    return out


def opf_path(states, centers, alphas, magnitude):
    cdef double[:, ::1] x = np.ascontiguousarray(states, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(centers, dtype=np.float64)
    cdef double[:, ::1] a = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef double mag = magnitude
    cdef Py_ssize_t num_states = x.shape[0], dim = x.shape[1], num_obst = c.shape[0]
    values = np.zeros(num_states, dtype=np.float64)
    grads = np.zeros((num_states, dim), dtype=np.float64)
    argmax = np.full(num_states, -1, dtype=np.int64)
    if num_obst == 0:
        return values, grads, argmax
    cdef double[::1] vv = values
    cdef double[:, ::1] gv = grads
    cdef cnp.int64_t[::1] av = argmax
    cdef Py_ssize_t t, b, k, best
    cdef double quad, best_quad, diff, val
    for t in range(num_states):
        best = 0
        best_quad = 0.0
        for b in range(num_obst):
            quad = 0.0
            for k in range(dim):
                diff = x[t, k] - c[b, k]
                quad += a[b, k] * diff * diff
            if b == 0 or quad < best_quad:
                best_quad = quad
                best = b
        val = mag * exp(-best_quad)
        vv[t] = val
        for k in range(dim):
            gv[t, k] = val * (-2.0 * a[best, k] * (x[t, k] - c[best, k]))
        av[t] = best
    return values, grads, argmax
