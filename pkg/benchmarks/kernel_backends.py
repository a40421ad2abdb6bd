#!/usr/bin/env python3
"""Compare the compiled kernel extension against the numpy reference.

Times each numerical kernel on representative problem sizes under both
implementations and prints the speedups.  The two backends are imported
directly, so no environment variable juggling is needed; results also
double as a parity check (max deviation per kernel is printed).

Usage:
    python benchmarks/kernel_backends.py [--repeats 20]
"""

import argparse
import time

import numpy as np

from beliefrhc.kernels import _reference

try:
    from beliefrhc.kernels import _fast
except ImportError:
    _fast = None


def build_cases(rng):
    """(name, args, result_picker) for every kernel at a realistic size."""
    n, k, n_x, queries, terms = 100_000, 100, 4, 2048, 64
    points = rng.normal(0.0, 1.0, (n, n_x))
    qpts = rng.normal(0.0, 1.0, (queries, n_x))
    weights = rng.random(n)
    weights /= weights.sum()
    inv_bw2 = 1.0 / rng.uniform(0.1, 1.0, n_x) ** 2
    offsets = rng.normal(0.0, 1.0, (n, n_x))
    mats = rng.normal(0.0, 0.5, (k, n_x, n_x))
    u0 = 0.37
    residuals = rng.normal(0.0, 1.0, (n, 3))
    variances = rng.uniform(0.5, 2.0, (n, 3))
    states = rng.normal(0.0, 2.0, (k, n_x))
    centers = rng.normal(0.0, 2.0, (terms, n_x))
    alphas = rng.uniform(0.5, 4.0, (terms, n_x))
    return [
        ("kde_scores", (points, qpts, weights, inv_bw2), lambda r: r),
        ("offset_scatter", (offsets, mats), lambda r: r),
        ("systematic_resample", (weights, u0), lambda r: r),
        ("diag_gauss_loglik", (residuals, variances), lambda r: r),
        ("opf_path", (states, centers, alphas, 1e4), lambda r: r[0]),
    ]


def best_time(fn, args, repeats):
    best = np.inf
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20,
                        help="timing repeats per kernel (best is kept)")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = build_cases(rng)

    header = f"{'kernel':<22}{'reference':>12}{'compiled':>12}{'speedup':>10}{'rel dev':>12}"
    print(header)
    print("-" * len(header))
    for name, call_args, pick in cases:
        t_ref, ref_out = best_time(getattr(_reference, name), call_args,
                                   args.repeats)
        if _fast is None:
            print(f"{name:<22}{t_ref * 1e3:>10.2f}ms{'—':>12}{'—':>10}{'—':>12}")
            continue
        t_fast, fast_out = best_time(getattr(_fast, name), call_args,
                                     args.repeats)
        ref_vals = np.asarray(pick(ref_out), dtype=np.float64)
        fast_vals = np.asarray(pick(fast_out), dtype=np.float64)
        scale = max(1.0, float(np.max(np.abs(ref_vals))))
        deviation = float(np.max(np.abs(ref_vals - fast_vals))) / scale
        print(
            f"{name:<22}{t_ref * 1e3:>10.2f}ms{t_fast * 1e3:>10.2f}ms"
            f"{t_ref / t_fast:>9.1f}x{deviation:>12.1e}"
        )
    if _fast is None:
        print("\ncompiled extension not built; only the reference backend was timed")


if __name__ == "__main__":
    main()
