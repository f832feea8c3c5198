"""Command-line front end: ``attain <command> <problem.json> ...``.

Exit status is 0 on success, 1 when validation or a solver fails, 2 on usage
errors. Failures print one ``error:`` line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from attain import io
from attain.cost import CostError, evaluate_cost
from attain.dynamics import IntegrationError, integrate
from attain.model import AGGREGATIONS, validate_problem
from attain.pipeline import (
    GoalSet,
    WeightError,
    attainment_report,
    run_goal_attainment,
    run_stage1,
    weight_sweep,
)


class UsageError(Exception):
    pass


class Failure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="attain", description="Two-stage goal-attainment parameter tuning.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("problem", help="problem file (JSON)")
        sp.add_argument("--jobs", type=int, default=None, help="concurrent scenario evaluations")

    sp = sub.add_parser("validate", help="check a problem file")
    common(sp)

    sp = sub.add_parser("simulate", help="integrate one scenario and write its trajectory")
    common(sp)
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--theta", help="comma-separated parameter values (default: parameters.init)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--figure", help="also render the trajectory to this image file")

    sp = sub.add_parser("stage1", help="per-scenario optimal goals")
    common(sp)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("attain", help="single parameter vector by goal attainment")
    common(sp)
    sp.add_argument("--goals", help="goals JSON from stage1 (default: file goals, else run stage1)")
    sp.add_argument("--aggregation", choices=AGGREGATIONS)
    sp.add_argument("--out", required=True)
    sp.add_argument("--trace", help="per-iteration solver trace CSV")

    sp = sub.add_parser("sweep", help="goal attainment over a grid of weight vectors")
    common(sp)
    sp.add_argument("--goals", help="goals JSON from stage1 (default: file goals, else run stage1)")
    sp.add_argument("--weights-file", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--plot-data", help="plot-ready CSV, one row per weight vector")
    sp.add_argument("--figure", help="render the trade-off to this image file")
    return p


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise Failure(f"{path}: {err.strerror}") from None


def _load(args, strict: bool = True):
    spec = io.load_problem(_read(args.problem), strict=strict)
    opts = spec.options
    seed = os.environ.get("ATTAIN_SEED")
    if seed is not None:
        try:
            opts = replace(opts, seed=int(seed))
        except ValueError:
            raise UsageError(f"ATTAIN_SEED must be an integer, got {seed!r}") from None
    if args.jobs is not None:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        opts = replace(opts, jobs=args.jobs)
    if getattr(args, "aggregation", None):
        opts = replace(opts, aggregation=args.aggregation)
    return spec.with_(options=opts)


def _goals(args, spec) -> GoalSet:
    if args.goals:
        goals = io.load_goals(_read(args.goals))
    elif spec.goals is not None:
        goals = GoalSet.from_values(spec.goals)
    else:
        print("no goals given; running stage 1 first")
        goals = run_stage1(spec)
    bad = [e for e in goals.entries if e.J_star != e.J_star]
    if bad:
        raise Failure(f"goal for scenario '{bad[0].scenario_id}' is undefined ({bad[0].status})")
    return goals


def _fmt_vec(v, digits=3) -> str:
    return "(" + ", ".join(f"{x:.{digits}f}" for x in v) + ")"


def cmd_validate(args) -> int:
    spec = _load(args, strict=False)
    report = validate_problem(spec)
    if not report.ok:
        raise Failure(f"{len(report)} finding(s): " + "; ".join(str(f) for f in report))
    print(f"ok: N={spec.N} scenarios, p={spec.p} parameters")
    return 0


def cmd_simulate(args) -> int:
    spec = _load(args)
    try:
        scenario = spec.scenario(args.scenario)
    except KeyError as err:
        raise UsageError(err.args[0]) from None
    if args.theta:
        try:
            theta = tuple(float(v) for v in args.theta.split(","))
        except ValueError:
            raise UsageError(f"--theta must be comma-separated numbers, got {args.theta!r}") from None
        if len(theta) != spec.p:
            raise UsageError(f"--theta needs {spec.p} values, got {len(theta)}")
    else:
        theta = spec.theta_init
    steps = scenario.steps or spec.options.integrator_steps
    try:
        traj = integrate(scenario, theta, steps)
        cost = evaluate_cost(scenario, theta, spec.options)
    except (IntegrationError, CostError) as err:
        raise Failure(str(err)) from None
    io.write_results(traj, args.out)
    if args.figure:
        from attain.report import plot_trajectory

        plot_trajectory(traj, args.figure, title=f"scenario {scenario.id}")
    print(f"scenario {scenario.id}: {steps} steps, J = {cost.total:.10g} "
          f"(terminal {cost.terminal_part:.6g}, running {cost.running_part:.6g})")
    return 0


def cmd_stage1(args) -> int:
    spec = _load(args)
    goals = run_stage1(spec)
    io.write_results(goals, args.out)
    print(f"{'scenario':<16}{'J_star':>16}  status")
    for e in goals.entries:
        print(f"{e.scenario_id:<16}{e.J_star:>16.8g}  {e.status}")
    failed = [e.scenario_id for e in goals.entries if e.status != "converged"]
    if failed:
        raise Failure(f"stage 1 did not converge for: {', '.join(failed)}")
    return 0


def cmd_attain(args) -> int:
    spec = _load(args)
    goals = _goals(args, spec)
    sol = run_goal_attainment(spec, goals, spec.options, trace_path=args.trace)
    io.write_results(sol, args.out)
    print(f"aggregation: {sol.aggregation_used}, status: {sol.status}, iterations: {sol.solver.iterations}")
    print("theta = (" + ", ".join(f"{v:.8g}" for v in sol.theta_star) + ")")
    print(f"gamma = {_fmt_vec(sol.gamma)}")
    print(attainment_report(spec, goals, sol).format())
    if sol.status != "converged":
        raise Failure(f"goal attainment did not converge ({sol.status})")
    return 0


def cmd_sweep(args) -> int:
    spec = _load(args)
    goals = _goals(args, spec)
    grid = io.read_weight_grid(_read(args.weights_file))
    table = weight_sweep(spec, goals, grid, spec.options)
    io.write_results(table, args.out)
    if args.plot_data:
        Path(args.plot_data).write_text(io.sweep_plot_data_csv(table), encoding="utf-8", newline="\n")
    if args.figure:
        from attain.report import plot_sweep

        plot_sweep(table, args.figure)
    for r in table.rows:
        print(f"w = {_fmt_vec(r.weights)}  gamma = {_fmt_vec(r.gamma)}  {r.status}")
    failed = sum(r.status != "converged" for r in table.rows)
    if failed:
        raise Failure(f"{failed} of {len(table.rows)} sweep rows did not converge")
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "stage1": cmd_stage1,
    "attain": cmd_attain,
    "sweep": cmd_sweep,
}


def run_cli(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = _parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (Failure, io.ProblemLoadError, CostError, WeightError, KeyError) as err:
        msg = err.args[0] if isinstance(err, KeyError) else str(err)
        print(f"error: {msg}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
