"""Command-line surface: scenario generation, planning, validation, oracle
cross-checks, and weight sweeps.

Exit codes: 0 success, 2 infeasible (or failed validation), 3 input error,
4 solver/numerical failure. All randomness flows from explicit seeds, so
repeated invocations with the same flags write byte-identical metrics.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace

import numpy as np

import gcsflight
from gcsflight import fileio, gcs, planner, regions, urllc

log = logging.getLogger("gcsflight.cli")

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3
EXIT_SOLVER = 4

_LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class CliInputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliInputError(message)


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--log-level", choices=sorted(_LOG_LEVELS), default="info")

    p = _Parser(prog="gcsflight", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", parents=[common], help="write a random scenario file")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--num-bs", type=int, default=30)
    gen.add_argument("--out", required=True)

    plan = sub.add_parser("plan", parents=[common], help="plan a trajectory and export artifacts")
    plan.add_argument("--scenario", required=True)
    plan.add_argument("--seed", type=int, default=0)
    plan.add_argument("--trials", type=int, default=gcs.DEFAULT_TRIALS)
    plan.add_argument("--samples", type=int, default=planner.DEFAULT_SAMPLES_PER_SEGMENT)
    plan.add_argument("--out-dir", required=True)
    plan.add_argument("--alpha", type=float, default=None)
    plan.add_argument("--beta", type=float, default=None)
    plan.add_argument("--lambda-ho", type=float, default=None)
    plan.add_argument("--gamma-sm", type=float, default=None)

    val = sub.add_parser("validate", parents=[common], help="re-audit exported plan artifacts")
    val.add_argument("--scenario", required=True)
    val.add_argument("--plan-dir", required=True)

    orc = sub.add_parser("oracle", parents=[common], help="compare against exhaustive path enumeration")
    orc.add_argument("--scenario", required=True)
    orc.add_argument("--max-paths", type=int, default=1000)
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--trials", type=int, default=gcs.DEFAULT_TRIALS)

    swp = sub.add_parser("sweep", parents=[common], help="re-plan over a weight grid")
    swp.add_argument("--scenario", required=True)
    swp.add_argument("--param", choices=["lambda_ho", "gamma_sm"], required=True)
    swp.add_argument("--values", required=True, help="comma-separated parameter values")
    swp.add_argument("--out", required=True)
    swp.add_argument("--seed", type=int, default=0)
    swp.add_argument("--trials", type=int, default=gcs.DEFAULT_TRIALS)

    return p


def cmd_gen(args) -> int:
    if args.num_bs < 1:
        raise CliInputError("--num-bs must be >= 1")
    scenario = planner.generate_scenario(seed=args.seed, num_bs=args.num_bs)
    fileio.save_scenario(scenario, args.out)
    print(f"wrote scenario with {args.num_bs} BSs to {args.out}")
    return EXIT_OK


def _apply_weight_overrides(scenario, args):
    overrides = {}
    for name, flag in (("alpha", args.alpha), ("beta", args.beta),
                       ("lambda_ho", args.lambda_ho), ("gamma_sm", args.gamma_sm)):
        if flag is not None:
            overrides[name] = flag
    if overrides:
        scenario = replace(scenario, weights=replace(scenario.weights, **overrides))
    return scenario


def cmd_plan(args) -> int:
    if args.trials < 1 or args.samples < 100:
        raise CliInputError("--trials must be >= 1 and --samples >= 100")
    scenario = _apply_weight_overrides(fileio.load_scenario(args.scenario), args)
    t0 = time.perf_counter()
    outcome = planner.plan(scenario, seed=args.seed, trials=args.trials)
    wall = time.perf_counter() - t0
    run_info = {
        "wall_clock_s": wall,
        "gcsflight_version": gcsflight.__version__,
        "samples_per_segment": args.samples,
    }
    if isinstance(outcome, planner.PlanResult):
        run_info["solver_stats"] = {
            "relaxation_iterations": outcome.stats.get("relaxation_iterations"),
            "num_edges": outcome.stats.get("num_edges"),
        }
    fileio.write_plan_artifacts(
        args.out_dir, scenario, outcome, args.seed, args.trials, args.samples, run_info=run_info
    )
    if isinstance(outcome, planner.PlanInfeasible):
        print(f"infeasible at stage '{outcome.stage}': {outcome.detail}")
        return EXIT_INFEASIBLE
    print(
        f"planned {len(outcome.sequence)} segments, {outcome.handover_count} handovers, "
        f"T = {outcome.total_time_s:.2f} s, length = {outcome.path_length_m:.2f} m, "
        f"gap = {outcome.gap:.3e} ({wall:.1f} s)"
    )
    print(f"artifacts in {args.out_dir}")
    return EXIT_OK


_CSV_MATCH_TOL = 2e-6


def cmd_validate(args) -> int:
    scenario = fileio.load_scenario(args.scenario)
    try:
        artifacts = fileio.load_plan_artifacts(args.plan_dir)
    except FileNotFoundError as exc:
        raise CliInputError(f"missing plan artifact: {exc}") from None
    if not artifacts.metrics.get("feasible", False):
        print(f"plan artifacts record infeasibility at stage '{artifacts.metrics.get('stage')}'")
        return EXIT_INFEASIBLE

    samples = int(artifacts.metrics.get("samples_per_segment", planner.DEFAULT_SAMPLES_PER_SEGMENT))
    result = fileio.result_from_artifacts(artifacts)
    report = planner.validate(scenario, result, samples_per_segment=max(samples, 100))

    # artifact-internal consistency: the CSV must match the control nets
    expected = fileio.sample_trajectory(scenario, result, samples)
    csv_ok = len(expected) == len(artifacts.trajectory)
    max_dev = 0.0
    csv_speed = 0.0
    if csv_ok:
        for exp, got in zip(expected, artifacts.trajectory):
            for k, key in enumerate(fileio.TRAJECTORY_HEADER):
                if key == "serving_bs":
                    if int(exp[k]) != got[key]:
                        csv_ok = False
                    continue
                dev = abs(float(exp[k]) - got[key])
                max_dev = max(max_dev, dev)
                if dev > _CSV_MATCH_TOL * max(1.0, abs(float(exp[k]))):
                    csv_ok = False
            csv_speed = max(csv_speed, got["speed_mps"])
    ts = [r["t_s"] for r in artifacts.trajectory]
    t_sorted = all(b > a for a, b in zip(ts[:-1], ts[1:]))
    speed_limit = scenario.v_max_mps * (1.0 + planner.SPEED_RTOL) + 1e-6

    checks = dict(report.checks)
    checks["csv_consistent"] = csv_ok
    checks["csv_time_sorted"] = t_sorted
    checks["csv_speed"] = csv_speed <= speed_limit

    print("validation report")
    print(f"  min snr margin (rel):    {report.min_snr_margin_rel:.6e}  [{_pf(checks['snr_margin'])}]")
    print(f"  max speed (m/s):         {report.max_speed_mps:.6f}  [{_pf(checks['speed'])}]")
    for p, r in sorted(report.continuity_residuals.items()):
        print(f"  continuity order {p}:      {r:.3e}")
    print(f"  continuity:              [{_pf(checks['continuity'])}]")
    print(f"  timing monotone:         [{_pf(checks['timing_monotone'])}]")
    print(f"  endpoint error (m):      {report.endpoint_error_m:.3e}  [{_pf(checks['endpoints'])}]")
    print(f"  boundary speed (m/s):    {report.boundary_speed_mps:.3e}  [{_pf(checks['boundary_velocity'])}]")
    print(f"  csv consistency (max dev {max_dev:.3e}): [{_pf(checks['csv_consistent'])}]")
    print(f"  csv time sorted:         [{_pf(checks['csv_time_sorted'])}]")
    print(f"  csv speed column:        {csv_speed:.6f}  [{_pf(checks['csv_speed'])}]")
    passed = all(checks.values())
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_INFEASIBLE


def _pf(flag: bool) -> str:
    return "pass" if flag else "FAIL"


def cmd_oracle(args) -> int:
    scenario = fileio.load_scenario(args.scenario)
    gamma_min = urllc.gamma_min(scenario.urllc)
    disks = regions.build_disks(scenario, gamma_min)
    if not disks:
        print("infeasible: no coverage disks")
        return EXIT_INFEASIBLE
    graph = regions.build_graph(disks, scenario.start[:2], scenario.goal[:2])
    if not regions.reachable(graph):
        print("infeasible: intersection graph disconnected")
        return EXIT_INFEASIBLE
    problem = gcs.build_gcs(graph, disks, scenario)
    try:
        paths = gcs.enumerate_simple_paths(graph, args.max_paths)
    except gcs.PathCountExceeded:
        print(
            f"more than {args.max_paths} simple paths; rerun with a larger --max-paths "
            "or use a smaller scenario for oracle comparisons"
        )
        return EXIT_INPUT
    route = gcs.plan_route(problem, gcs.RouteOptions(seed=args.seed, trials=args.trials))
    oracle = gcs.enumerate_oracle(problem, args.max_paths)
    rel_gap = (route.best.cost - oracle.best.cost) / max(abs(oracle.best.cost), 1e-9)
    print(f"simple paths enumerated: {len(paths)}")
    print(f"plan cost:   {route.best.cost:.6f}  (path {route.best.sequence})")
    print(f"oracle cost: {oracle.best.cost:.6f}  (path {oracle.best.sequence})")
    print(f"lower bound: {route.lower_bound:.6f}")
    print(f"relative gap to oracle: {rel_gap:.3e}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = fileio.load_scenario(args.scenario)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError:
        raise CliInputError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    if not values:
        raise CliInputError("--values must contain at least one number")
    rows = planner.sweep(scenario, {args.param: values}, seed=args.seed, trials=args.trials)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["param", "value", "feasible", "stage", "N", "T_s", "length_m", "peak_acc_mps2", "cost", "gap"]
        )
        for r in rows:
            writer.writerow(
                [
                    r.parameter,
                    f"{r.value:g}",
                    int(r.feasible),
                    r.stage or "",
                    "" if r.handovers is None else r.handovers,
                    "" if r.total_time_s is None else f"{r.total_time_s:.6f}",
                    "" if r.path_length_m is None else f"{r.path_length_m:.6f}",
                    "" if r.peak_acceleration_mps2 is None else f"{r.peak_acceleration_mps2:.6f}",
                    "" if r.cost_total is None else f"{r.cost_total:.6f}",
                    "" if r.gap is None else f"{r.gap:.6e}",
                ]
            )
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "gen": cmd_gen,
    "plan": cmd_plan,
    "validate": cmd_validate,
    "oracle": cmd_oracle,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=_LOG_LEVELS[args.log_level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except CliInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except fileio.ScenarioFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (gcs.SolverFailure, urllc.ModelRegimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
