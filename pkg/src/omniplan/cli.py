"""Command line entry point.

Exit status: 0 ok, 2 scenario error, 3 planning failure, 4 collision,
5 time cap exceeded. CSV output goes to ``--out`` or, when that is not
given, to ``$OMNIPLAN_OUT`` (default: the current directory).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import report
from .gridmap import PlanningError
from .optimizer import SolverError
from .planner import plan_global, plan_local, problem_context
from .scenario import ScenarioError, Scenario, load_scenario
from .simulator import CollisionError, SimConfig, TimeCapExceeded, run

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_PLAN = 3
EXIT_COLLISION = 4
EXIT_TIMEOUT = 5

OUT_ENV = "OMNIPLAN_OUT"


class _Fail(Exception):
    def __init__(self, code: int, category: str, message: str):
        super().__init__(message)
        self.code = code
        self.category = category


def _out_dir(arg: str | None) -> Path:
    d = Path(arg or os.environ.get(OUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load(path: str) -> Scenario:
    try:
        return load_scenario(path)
    except ScenarioError as exc:
        raise _Fail(EXIT_PARSE, "parse", str(exc)) from exc
    except (FileNotFoundError, IsADirectoryError) as exc:
        raise _Fail(EXIT_PARSE, "parse", str(exc)) from exc


def _simulate(sc: Scenario, mode: str | None = None, sim: SimConfig | None = None):
    if mode is not None:
        sc = sc.with_planner(mode=mode)
    try:
        return run(sc, sim=sim)
    except CollisionError as exc:
        raise _Fail(EXIT_COLLISION, "collision", str(exc)) from exc
    except TimeCapExceeded as exc:
        raise _Fail(EXIT_TIMEOUT, "timeout", str(exc)) from exc
    except (PlanningError, SolverError) as exc:
        raise _Fail(EXIT_PLAN, "plan", f"{type(exc).__name__}: {exc}") from exc


def _parse_degrees(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated degrees, got {text!r}")
    if not vals or not all(0 < v <= 180 for v in vals):
        raise argparse.ArgumentTypeError("theta_max values must lie in (0, 180] degrees")
    return vals


def cmd_check(args) -> int:
    sc = _load(args.scenario)
    grid = sc.grid()
    start = sc.start
    try:
        # every goal must be reachable from the previous one
        for goal in sc.goals:
            plan = plan_global(grid, start, goal, sc.planner.s_tolerance, sc.planner.convention)
            start = plan[-1]
    except PlanningError as exc:
        raise _Fail(EXIT_PLAN, "plan", f"{type(exc).__name__}: {exc}") from exc
    print(f"ok: {sc.name or args.scenario} ({len(sc.goals)} goals, {len(sc.obstacles)} obstacles)")
    return EXIT_OK


def cmd_plan(args) -> int:
    sc = _load(args.scenario)
    if args.mode:
        sc = sc.with_planner(mode=args.mode)
    goal = sc.goals[0]
    try:
        g = plan_global(sc.grid(), sc.start, goal, sc.planner.s_tolerance, sc.planner.convention)
        ctx = problem_context(sc.planner, sc.world_obstacles(), sc.robot.r_roi, goal.orientation_target)
        band, rep = plan_local(g, sc.planner, ctx)
    except (PlanningError, SolverError) as exc:
        raise _Fail(EXIT_PLAN, "plan", f"{type(exc).__name__}: {exc}") from exc
    if args.out:
        report.write_band_csv(band, args.out)
    else:
        sys.stdout.write(report.write_band_csv(band))
    print(f"band: {band.n} poses, {band.total_time:.3f} s, objective {rep.final_objective:.6g} "
          f"after {rep.iterations} iterations ({rep.reason.value})", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _load(args.scenario)
    sim = sc.sim
    if args.seed is not None or args.noise is not None:
        try:
            sim = replace(sim, noise=sim.noise if args.noise is None else args.noise,
                          seed=sim.seed if args.seed is None else args.seed)
        except ValueError as exc:
            raise _Fail(EXIT_PARSE, "parse", str(exc)) from exc
    res = _simulate(sc, args.mode, sim)
    s = report.summarize_result(res)
    out = _out_dir(args.out)
    stem = f"{sc.name or 'scenario'}_{res.mode}"
    report.write_trace_csv(res.trace, out / f"{stem}_trace.csv")
    report.write_summary_csv(
        [report.summary_row(s, label=stem, mode=res.mode, theta_max=res.theta_max)], out / f"{stem}_summary.csv"
    )
    print(f"{stem}: {s.total_time:.2f} s, mean dtheta {math.degrees(s.mean_delta_theta):.2f} deg, "
          f"max {math.degrees(s.max_delta_theta):.2f} deg, "
          f"{100 * s.pct_within_theta_max:.1f}% within theta_max")
    print(f"wrote {out / (stem + '_trace.csv')}")
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = _load(args.scenario)
    runs = {m: _simulate(sc, m) for m in ("oateb", "teb")}
    sums = {m: report.summarize_result(r) for m, r in runs.items()}
    rows = report.compare(sums["teb"], sums["oateb"])
    sys.stdout.write(report.format_comparison(rows, labels=("teb", "oateb")))
    out = _out_dir(args.out)
    name = sc.name or "scenario"
    report.write_summary_csv(
        [report.summary_row(sums[m], label=f"{name}_{m}", mode=m, theta_max=runs[m].theta_max) for m in runs],
        out / f"{name}_compare.csv",
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _load(args.scenario)
    degs = args.theta_max
    if degs != sorted(degs):
        degs = sorted(degs)
        print(f"note: theta_max values sorted to {','.join(f'{d:g}' for d in degs)}", file=sys.stderr)
    rows = report.sweep(sc, [math.radians(d) for d in degs], workers=args.workers)
    name = sc.name or "scenario"
    out = _out_dir(args.out)
    csv_rows = [
        report.summary_row(r.summary, label=f"{name}_{d:g}deg", mode=sc.planner.mode, theta_max=r.theta_max,
                           error=r.error)
        for d, r in zip(degs, rows)
    ]
    report.write_summary_csv(csv_rows, out / f"{name}_sweep.csv")
    for d, r in zip(degs, rows):
        if r.summary is None:
            print(f"{d:6g} deg  failed: {r.error}")
        else:
            s = r.summary
            print(f"{d:6g} deg  time {s.total_time:6.2f} s  mean {math.degrees(s.mean_delta_theta):6.2f} deg  "
                  f"max {math.degrees(s.max_delta_theta):6.2f} deg")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="omniplan", description="Orientation-aware band planning for omni robots.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="validate a scenario and the reachability of its goals")
    c.add_argument("scenario")
    c.set_defaults(func=cmd_check)

    c = sub.add_parser("plan", help="one global + local plan toward the first goal, as band CSV")
    c.add_argument("scenario")
    c.add_argument("--out", help="CSV file (default: stdout)")
    c.add_argument("--mode", choices=("oateb", "teb"))
    c.set_defaults(func=cmd_plan)

    c = sub.add_parser("simulate", help="closed-loop run; writes trace and summary CSVs")
    c.add_argument("scenario")
    c.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or .)")
    c.add_argument("--seed", type=int)
    c.add_argument("--noise", type=float, help="bound of uniform pose noise")
    c.add_argument("--mode", choices=("oateb", "teb"))
    c.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="run both modes and tabulate the differences")
    c.add_argument("scenario")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    c = sub.add_parser("sweep", help="one run per theta_max value")
    c.add_argument("scenario")
    c.add_argument("--theta-max", type=_parse_degrees, default=[5.0, 10.0, 15.0, 20.0],
                   help="comma-separated degrees (default 5,10,15,20)")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--out")
    c.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
