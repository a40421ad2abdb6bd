"""Command-line interface.

Subcommands: ``plan`` (single horizon solve), ``run`` (closed-loop
episodes with CSV traces), ``benchmark`` (solve-time scaling across
horizon and particle counts), ``audit`` (observation-model curvature
report), and ``validate`` (scenario sanity findings).

Exit codes: 0 success, 1 usage or configuration error, 2 planner did not
converge, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels
from .belief import map_estimate, sample_initial_belief
from .dynamics import linearize_process
from .errors import BeliefRHCError, ConfigurationError
from .objective import (
    CostContext,
    CostWeights,
    chain_products,
    lemma1_audit,
    map_trajectory,
    offset_summaries,
)
from .rhc import EpisodeConfig, _rollout, resample_path, run_episode
from .scenarios import (
    SCHEMA_VERSION,
    control_weight_matrix,
    load_scenario,
    scenario_to_dict,
    validate_scenario,
    write_trace,
)
from .solver import (
    PlanProblem,
    path_tracking_controls,
    problem_size,
    solve,
    straight_line_controls,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
EXIT_RUNTIME = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="beliefrhc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("scenario_pos", nargs="?", default=None, metavar="SCENARIO",
                       help="built-in name or path to a scenario JSON file")
        p.add_argument("--scenario", default=None,
                       help="built-in name or path (alternative to the positional)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--verbose", action="store_true")

    plan = sub.add_parser("plan", help="solve one horizon problem")
    add_common(plan)
    plan.add_argument("--K", type=int, default=None, help="horizon override")
    plan.add_argument("--N", type=int, default=None, help="particle count override")
    plan.add_argument("--beta", type=int, choices=(0, 1), default=None)
    plan.add_argument("--init", default=None,
                      help="previous plan JSON whose controls seed this solve")
    plan.add_argument("--multi-start", dest="multi_start", action="store_true",
                      default=None)
    plan.add_argument("--no-multi-start", dest="multi_start", action="store_false")
    plan.add_argument("--max-iterations", type=int, default=20000)

    run = sub.add_parser("run", help="run closed-loop episodes")
    add_common(run)
    run.add_argument("--episodes", type=int, default=1)
    run.add_argument("--K", type=int, default=None)
    run.add_argument("--N", type=int, default=None)
    run.add_argument("--beta", type=int, choices=(0, 1), default=None)
    run.add_argument("--max-steps", type=int, default=None)
    run.add_argument("--replan-period", type=int, default=None)

    bench = sub.add_parser("benchmark", help="solve-time scaling table")
    add_common(bench)
    bench.add_argument("--K-list", default="10,20,50,100",
                       help="comma-separated horizons")
    bench.add_argument("--N-list", default="100,1000,10000",
                       help="comma-separated particle counts")
    bench.add_argument("--beta", type=int, choices=(0, 1), default=None)

    audit = sub.add_parser("audit", help="observation-model curvature report")
    add_common(audit)
    audit.add_argument("--box", default=None,
                       help="audit region 'lo1,lo2,...:hi1,hi2,...'")
    audit.add_argument("--directions", type=int, default=4,
                       help="number of random directions to audit")
    audit.add_argument("--samples", type=int, default=1000)

    validate = sub.add_parser("validate", help="scenario sanity findings")
    add_common(validate)
    return parser


def _scenario_arg(args):
    name = args.scenario if args.scenario is not None else args.scenario_pos
    if name is None:
        raise _UsageError("a scenario (positional or --scenario) is required")
    return name


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _verbose_round_printer(enabled):
    if not enabled:
        return None

    def on_round(record):
        print(
            "round={round} start={start} inner={inner_iterations} "
            "cost={cost:.6g} residual={residual:.3e}".format(**record),
            file=sys.stderr,
        )

    return on_round


def _assemble_problem(scenario, horizon, num_particles, beta, seed,
                      u0=None, multi_start=None, max_iterations=20000,
                      on_round=None):
    """Build a solve-ready problem from a scenario; returns (problem, setup).

    ``setup`` carries the sampled belief, the plan-time estimate, and the
    assembly wall time split into estimate extraction and context
    assembly (the latter is what scales with N at solve time).
    """
    belief = sample_initial_belief(scenario.initial_belief, num_particles, seed)
    t0 = time.perf_counter()
    x_map = map_estimate(belief)
    t_map = time.perf_counter() - t0
    t0 = time.perf_counter()
    line = np.outer(
        np.arange(horizon + 1) / horizon, scenario.goal.state - x_map
    ) + x_map
    zeros = np.zeros((horizon, scenario.process.n_u))
    lin0 = linearize_process(scenario.process, line, zeros)
    if u0 is not None:
        nominal_controls = np.asarray(u0, dtype=np.float64).reshape(
            horizon, scenario.process.n_u
        )
    elif scenario.initial_path is not None:
        nominal_controls = path_tracking_controls(
            lin0, resample_path(scenario.initial_path, horizon)
        )
    else:
        nominal_controls = straight_line_controls(lin0, x_map, scenario.goal.state)
    nominal_states = _rollout(scenario.process, x_map, nominal_controls)
    lin = linearize_process(scenario.process, nominal_states, nominal_controls)
    chains = chain_products(lin)
    offsets = offset_summaries(belief, x_map, chains)
    traj = map_trajectory(lin, x_map)
    weights = CostWeights(V=control_weight_matrix(scenario), beta=beta)
    ctx = CostContext(
        map_traj=traj,
        offsets=offsets,
        weights=weights,
        observation=scenario.observation,
        obstacles=scenario.obstacles if scenario.obstacles.num_terms else None,
    )
    problem = PlanProblem(
        ctx=ctx,
        goal_state=scenario.goal.state,
        u_max=scenario.defaults.control_limit,
        max_iterations=max_iterations,
        U0=nominal_controls.ravel(),
        multi_start=bool(beta) if multi_start is None else multi_start,
        on_round=on_round,
    )
    t_assemble = time.perf_counter() - t0
    return problem, {
        "belief": belief,
        "x_map": x_map,
        "map_time": t_map,
        "assemble_time": t_assemble,
    }


def _float_list(obj):
    return np.asarray(obj, dtype=np.float64).tolist()


def cmd_plan(args):
    scenario = load_scenario(_scenario_arg(args))
    horizon = args.K if args.K is not None else scenario.defaults.horizon
    particles = args.N if args.N is not None else scenario.defaults.num_particles
    beta = args.beta if args.beta is not None else scenario.defaults.beta
    u0 = None
    if args.init is not None:
        with open(args.init, "r", encoding="utf-8") as handle:
            previous = json.load(handle)
        u0 = np.asarray(previous["controls"], dtype=np.float64)
        if u0.shape != (horizon, scenario.process.n_u):
            raise ConfigurationError(
                "--init controls do not match the requested horizon"
            )
    problem, setup = _assemble_problem(
        scenario, horizon, particles, beta, args.seed,
        u0=u0, multi_start=args.multi_start,
        max_iterations=args.max_iterations,
        on_round=_verbose_round_printer(args.verbose),
    )
    solution = solve(problem)
    sizes = problem_size(problem)
    out = _out_dir(args)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "plan",
        "scenario": scenario_to_dict(scenario),
        "config": {
            "horizon": horizon,
            "num_particles": particles,
            "beta": beta,
            "seed": args.seed,
            "multi_start": problem.multi_start,
            "max_iterations": args.max_iterations,
            "kernel_backend": kernels.backend_name(),
        },
        "sizes": sizes,
        "x_map": _float_list(setup["x_map"]),
        "controls": solution.controls.tolist(),
        "map_states": solution.map_states.tolist(),
        "cost": solution.cost,
        "breakdown": solution.breakdown,
        "terminal_residual": solution.terminal_residual,
        "iterations": solution.iterations,
        "wall_time": solution.wall_time,
        "converged": solution.converged,
        "status": solution.status,
        "stationarity": solution.stationarity,
    }
    path = out / f"plan_{scenario.name or 'scenario'}_beta{beta}.json"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
    print(
        f"plan {scenario.name}: status={solution.status} "
        f"cost={solution.cost:.6g} residual={solution.terminal_residual:.3e} "
        f"iterations={solution.iterations} variables={sizes['num_variables']} "
        f"-> {path}"
    )
    return EXIT_OK if solution.converged else EXIT_NOT_CONVERGED


def cmd_run(args):
    scenario = load_scenario(_scenario_arg(args))
    overrides = {}
    if args.K is not None:
        overrides["horizon"] = args.K
    if args.N is not None:
        overrides["num_particles"] = args.N
    if args.beta is not None:
        overrides["beta"] = args.beta
    if args.max_steps is not None:
        overrides["max_steps"] = args.max_steps
    if args.replan_period is not None:
        overrides["replan_period"] = args.replan_period
    out = _out_dir(args)
    rows = []
    failures = 0
    for episode in range(args.episodes):
        config = EpisodeConfig.from_scenario(
            scenario, seed=args.seed + episode, **overrides
        )
        try:
            trace = run_episode(config)
        except BeliefRHCError as exc:
            failures += 1
            rows.append(
                {
                    "episode": episode,
                    "seed": args.seed + episode,
                    "error": str(exc),
                }
            )
            if args.verbose:
                print(f"episode {episode}: error {exc}", file=sys.stderr)
            continue
        trace_path = out / f"trace_{scenario.name}_ep{episode:03d}.csv"
        write_trace(trace, trace_path)
        rows.append(
            {
                "episode": episode,
                "seed": args.seed + episode,
                "reason": trace.reason,
                "success": trace.success,
                "steps": trace.steps,
                "final_goal_probability": trace.final_goal_probability,
                "trace": trace_path.name,
            }
        )
        if trace.reason in ("filter-degenerate", "planner-degenerate"):
            failures += 1
        if args.verbose:
            print(
                f"episode {episode}: reason={trace.reason} steps={trace.steps}",
                file=sys.stderr,
            )
    completed = [r for r in rows if "reason" in r]
    successes = [r for r in completed if r["success"]]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": "run",
        "scenario": scenario.name,
        "config": {
            "episodes": args.episodes,
            "seed": args.seed,
            "overrides": overrides,
            "kernel_backend": kernels.backend_name(),
        },
        "success_rate": (len(successes) / len(rows)) if rows else 0.0,
        "mean_steps": (
            float(np.mean([r["steps"] for r in completed])) if completed else 0.0
        ),
        "episodes": rows,
    }
    summary_path = out / f"run_{scenario.name}_summary.json"
    with open(summary_path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2)
    print(
        f"run {scenario.name}: episodes={args.episodes} "
        f"success_rate={summary['success_rate']:.2f} "
        f"mean_steps={summary['mean_steps']:.1f} -> {summary_path}"
    )
    if rows and failures == len(rows):
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_benchmark(args):
    scenario = load_scenario(_scenario_arg(args))
    try:
        k_values = [int(v) for v in str(args.K_list).split(",") if v.strip()]
        n_values = [int(v) for v in str(args.N_list).split(",") if v.strip()]
    except ValueError as exc:
        raise _UsageError(f"bad --K-list/--N-list: {exc}") from exc
    if not k_values or not n_values:
        raise _UsageError("--K-list and --N-list must be nonempty")
    beta = args.beta if args.beta is not None else scenario.defaults.beta
    rows = []
    for horizon in k_values:
        for particles in n_values:
            problem, setup = _assemble_problem(
                scenario, horizon, particles, beta, args.seed
            )
            t0 = time.perf_counter()
            solution = solve(problem)
            solve_time = time.perf_counter() - t0
            sizes = problem_size(problem)
            rows.append(
                {
                    "K": horizon,
                    "N": particles,
                    "num_variables": sizes["num_variables"],
                    "num_constraint_rows": sizes["num_constraint_rows"],
                    "solve_time_s": solve_time + setup["assemble_time"],
                    "estimate_time_s": setup["map_time"],
                    "iterations": solution.iterations,
                    "cost": solution.cost,
                    "terminal_residual": solution.terminal_residual,
                    "converged": solution.converged,
                }
            )
            if args.verbose:
                print(f"benchmark cell K={horizon} N={particles} done",
                      file=sys.stderr)
    for horizon in k_values:
        cells = [r["num_variables"] for r in rows if r["K"] == horizon]
        if len(set(cells)) != 1:
            raise RuntimeError(
                f"problem size varied with N at K={horizon}: {cells}"
            )
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "benchmark",
        "scenario": scenario.name,
        "config": {
            "K_list": k_values,
            "N_list": n_values,
            "beta": beta,
            "seed": args.seed,
            "kernel_backend": kernels.backend_name(),
        },
        "note": (
            "solve_time_s covers offset/trajectory assembly plus the solve; "
            "estimate extraction (KDE) is reported separately"
        ),
        "rows": rows,
    }
    out = _out_dir(args)
    path = out / f"benchmark_{scenario.name}.json"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2)
    header = (
        f"{'K':>5} {'N':>8} {'vars':>6} {'rows':>6} "
        f"{'solve[s]':>10} {'est[s]':>8} {'iters':>6} {'conv':>5}"
    )
    print(header)
    for r in rows:
        print(
            f"{r['K']:>5} {r['N']:>8} {r['num_variables']:>6} "
            f"{r['num_constraint_rows']:>6} {r['solve_time_s']:>10.4f} "
            f"{r['estimate_time_s']:>8.4f} {r['iterations']:>6} "
            f"{str(r['converged']):>5}"
        )
    print(f"-> {path}")
    return EXIT_OK


def cmd_audit(args):
    scenario = load_scenario(_scenario_arg(args))
    obs = scenario.observation
    if args.box is not None:
        try:
            lo_text, hi_text = args.box.split(":")
            lo = np.array([float(v) for v in lo_text.split(",")])
            hi = np.array([float(v) for v in hi_text.split(",")])
        except ValueError as exc:
            raise _UsageError(f"bad --box: {exc}") from exc
    else:
        span = np.concatenate(
            [scenario.initial_belief.means.ravel(), scenario.goal.state]
        )
        center = np.zeros(obs.n_x)
        center[: scenario.goal.state.size] = scenario.goal.state
        radius = max(1.0, float(np.max(np.abs(span))))
        lo = center - radius
        hi = center + radius
        if hasattr(obs, "x1_floor"):
            lo[0] = max(lo[0], 0.05)
    if lo.size != obs.n_x or hi.size != obs.n_x:
        raise ConfigurationError("--box corner length must equal the state dimension")
    rng = np.random.default_rng(args.seed)
    reports = []
    for index in range(args.directions):
        direction = rng.standard_normal(obs.n_x)
        direction /= np.linalg.norm(direction)
        report = lemma1_audit(
            obs, direction, (lo, hi), samples=args.samples, seed=args.seed + index
        )
        reports.append(report)
        print(
            f"direction {index}: d={np.array2string(direction, precision=3)} "
            f"verdicts={list(report.verdicts)} "
            f"conv_viol={report.worst_convexity_violation:.3e} "
            f"conc_viol={report.worst_concavity_violation:.3e} "
            f"identity_err={report.max_identity_error:.3e} "
            f"lemma_applies={report.lemma_applies}"
        )
    if args.out != ".":
        out = _out_dir(args)
        payload = {
            "schema_version": SCHEMA_VERSION,
            "command": "audit",
            "scenario": scenario.name,
            "config": {
                "seed": args.seed,
                "samples": args.samples,
                "directions": args.directions,
                "box": {"lo": lo.tolist(), "hi": hi.tolist()},
            },
            "reports": [
                {
                    "direction": r.direction.tolist(),
                    "verdicts": list(r.verdicts),
                    "worst_convexity_violation": r.worst_convexity_violation,
                    "worst_concavity_violation": r.worst_concavity_violation,
                    "max_identity_error": r.max_identity_error,
                    "lemma_applies": r.lemma_applies,
                }
                for r in reports
            ],
        }
        path = out / f"audit_{scenario.name}.json"
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2)
        print(f"-> {path}")
    return EXIT_OK


def cmd_validate(args):
    scenario = load_scenario(_scenario_arg(args))
    findings = validate_scenario(scenario)
    if findings:
        for finding in findings:
            print(f"finding: {finding}")
    else:
        print(f"validate {scenario.name}: no findings")
    return EXIT_OK


_COMMANDS = {
    "plan": cmd_plan,
    "run": cmd_run,
    "benchmark": cmd_benchmark,
    "audit": cmd_audit,
    "validate": cmd_validate,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BeliefRHCError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SystemExit:
        raise
    except Exception as exc:  # pragma: no cover - final safety net
        print(f"unexpected error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
