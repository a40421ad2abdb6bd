#!/usr/bin/env python3
"""Plot an executed episode trace (requires matplotlib).

Reads a trace CSV produced by ``beliefrhc run`` and draws the true path,
the filter's maximum-a-posteriori estimates, and — when a scenario name
is given — the goal region and obstacle penalty contours.

Usage:
    python scripts/plot_trace.py trace_light_dark_ep000.csv \
        --scenario light_dark --out episode.png
"""

import argparse
import csv

import numpy as np


def load_columns(path):
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    if not rows:
        raise SystemExit(f"{path}: trace has no executed steps")
    names = rows[0].keys()
    return {name: np.array([float(r[name]) for r in rows]) for name in names}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("trace", help="trace CSV from the run command")
    parser.add_argument("--scenario", help="scenario name for goal/obstacle overlay")
    parser.add_argument("--out", help="write the figure here instead of showing it")
    args = parser.parse_args()

    import matplotlib

    if args.out:
        matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cols = load_columns(args.trace)
    fig, ax = plt.subplots(figsize=(7, 6))

    if args.scenario:
        from beliefrhc import load_scenario, opf_value

        scenario = load_scenario(args.scenario)
        goal = scenario.goal
        ax.add_patch(
            plt.Circle(goal.state[:2], goal.radius, color="tab:green",
                       alpha=0.25, label="goal region")
        )
        if scenario.obstacles.num_terms:
            span_x = cols["x_true_0"].min() - 1, cols["x_true_0"].max() + 1
            span_y = cols["x_true_1"].min() - 1, cols["x_true_1"].max() + 1
            gx, gy = np.meshgrid(np.linspace(*span_x, 200),
                                 np.linspace(*span_y, 200))
            field = np.array(
                [
                    opf_value(scenario.obstacles, np.array([x, y]))
                    for x, y in zip(gx.ravel(), gy.ravel())
                ]
            ).reshape(gx.shape)
            levels = scenario.obstacles.magnitude * np.array([0.01, 0.1, 0.5])
            ax.contour(gx, gy, field, levels=levels, colors="tab:red",
                       linewidths=0.8, alpha=0.7)

    ax.plot(cols["x_true_0"], cols["x_true_1"], "-o", ms=3,
            color="tab:blue", label="true path")
    ax.plot(cols["x_map_0"], cols["x_map_1"], "--s", ms=3,
            color="tab:orange", label="belief MAP")
    ax.plot(cols["x_true_0"][0], cols["x_true_1"][0], "k^", ms=9,
            label="start")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best")
    ax.set_title(args.trace)
    fig.tight_layout()
    if args.out:
        fig.savefig(args.out, dpi=150)
        print(f"wrote {args.out}")
    else:
        plt.show()


if __name__ == "__main__":
    main()
