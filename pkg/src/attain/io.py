"""Problem-file loading and result serialisation.

Problem files are JSON documents with ``"schema": 1``. Floats are written with
17 significant digits so every value survives a write/read cycle exactly.
Unbounded box sides are written as ``null``.

Option defaults (any field of :class:`~attain.model.SolverOptions` may be set
under ``options``):

=====================  ==============
integrator_steps       200
fd_step_scale          eps**(1/3)
kkt_tol                1e-6
feas_tol               1e-8
max_iter               200
max_backtracks         40
aggregation            minimax
state_bound_mode       monitor
penalty_coefficient    1000
multistart_count       0
seed                   0
warm_start             theta_init
jobs                   1
=====================  ==============
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from attain import expr as ex
from attain.dynamics import Trajectory
from attain.model import BoxSet, ProblemSpec, Scenario, SolverOptions, validate_problem
from attain.pipeline import GoalEntry, GoalSet, GoalSolution, SweepTable, normalize_weights

SCHEMA_VERSION = 1


class ProblemLoadError(ValueError):
    """Bad problem or results document; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.reason = message


# --------------------------------------------------------------------------
# JSON output


def fmt_float(v: float) -> str:
    v = float(v)
    if v == 0.0 and math.copysign(1.0, v) < 0:
        # "-0" would read back as the integer 0
        return "-0.0"
    return format(v, ".17g")


def _scalar(v: Any) -> str:
    if isinstance(v, bool) or v is None:
        return json.dumps(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v) if math.isfinite(v) else "null"
    return json.dumps(v, ensure_ascii=False)


def dumps(obj: Any, level: int = 0) -> str:
    """Deterministic JSON with full-precision floats; scalar lists stay on one line."""
    pad = "  " * (level + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * level + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_scalar(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, level + 1) for v in seq) + "\n" + "  " * level + "]"
    return _scalar(obj)


def _bound_list(values: Sequence[float]) -> list:
    return [None if math.isinf(v) else v for v in values]


# --------------------------------------------------------------------------
# problem files


def _need(doc: dict, key: str, path: str):
    if not isinstance(doc, dict):
        raise ProblemLoadError(path, "expected an object")
    if key not in doc:
        raise ProblemLoadError(f"{path}.{key}" if path else key, "missing required field")
    return doc[key]


def _num(v, path: str, allow_null_as: float | None = None) -> float:
    if v is None and allow_null_as is not None:
        return allow_null_as
    if isinstance(v, str) and allow_null_as is not None and v.strip().lower() in ("inf", "+inf", "-inf"):
        return float(v)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProblemLoadError(path, f"expected a number, got {json.dumps(v)}")
    return float(v)


def _int(v, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ProblemLoadError(path, f"expected an integer, got {json.dumps(v)}")
    return v


def _nums(v, path: str, allow_null_as: float | None = None) -> tuple[float, ...]:
    if not isinstance(v, list):
        raise ProblemLoadError(path, "expected an array of numbers")
    return tuple(_num(x, f"{path}[{i}]", allow_null_as) for i, x in enumerate(v))


def _expr(text, path: str, sid: str | None) -> ex.Expr:
    if not isinstance(text, str):
        raise ProblemLoadError(path, "expected an expression string")
    try:
        return ex.parse(text)
    except ex.ExprSyntaxError as err:
        who = f" (scenario '{sid}')" if sid is not None else ""
        raise ProblemLoadError(path, f"{err}{who}") from None


def _options(doc: dict | None, path: str = "options") -> SolverOptions:
    if doc is None:
        return SolverOptions()
    if not isinstance(doc, dict):
        raise ProblemLoadError(path, "expected an object")
    known = {f.name: f for f in fields(SolverOptions)}
    kwargs = {}
    for key, v in doc.items():
        p = f"{path}.{key}"
        if key not in known:
            raise ProblemLoadError(p, "unknown option")
        default = getattr(SolverOptions(), key)
        if isinstance(default, bool):
            kwargs[key] = bool(v)
        elif isinstance(default, int):
            kwargs[key] = _int(v, p)
        elif isinstance(default, float):
            kwargs[key] = _num(v, p)
        else:
            if not isinstance(v, str):
                raise ProblemLoadError(p, "expected a string")
            kwargs[key] = v
    opts = SolverOptions(**kwargs)
    problems = opts.problems()
    if problems:
        raise ProblemLoadError(path, problems[0])
    return opts


def spec_from_dict(doc: dict, strict: bool = True, normalize: bool = True) -> ProblemSpec:
    if not isinstance(doc, dict):
        raise ProblemLoadError("$", "top level must be an object")
    schema = _need(doc, "schema", "")
    if schema != SCHEMA_VERSION:
        raise ProblemLoadError("schema", f"unsupported schema version {json.dumps(schema)} (expected {SCHEMA_VERSION})")

    par = _need(doc, "parameters", "")
    p = _int(_need(par, "dim", "parameters"), "parameters.dim")
    init = _nums(_need(par, "init", "parameters"), "parameters.init")
    lower = _nums(par.get("lower", [None] * p), "parameters.lower", -math.inf)
    upper = _nums(par.get("upper", [None] * p), "parameters.upper", math.inf)

    raw_scen = _need(doc, "scenarios", "")
    if not isinstance(raw_scen, list) or not raw_scen:
        raise ProblemLoadError("scenarios", "expected a non-empty array")
    scenarios = []
    for i, s in enumerate(raw_scen):
        sp = f"scenarios[{i}]"
        sid = _need(s, "id", sp)
        if not isinstance(sid, str) or not sid:
            raise ProblemLoadError(f"{sp}.id", "expected a non-empty string")
        dyn = _need(s, "dynamics", sp)
        if not isinstance(dyn, list):
            raise ProblemLoadError(f"{sp}.dynamics", "expected an array of expression strings")
        x0 = _nums(_need(s, "x0", sp), f"{sp}.x0")
        n = len(x0)
        steps = s.get("steps")
        scenarios.append(
            Scenario(
                id=sid,
                dynamics=tuple(_expr(e, f"{sp}.dynamics[{j}]", sid) for j, e in enumerate(dyn)),
                x0=x0,
                t0=_num(s.get("t0", 0.0), f"{sp}.t0"),
                tf=_num(_need(s, "tf", sp), f"{sp}.tf"),
                terminal_cost=_expr(s.get("terminal_cost", "0"), f"{sp}.terminal_cost", sid),
                running_cost=_expr(s.get("running_cost", "0"), f"{sp}.running_cost", sid),
                state_bounds=BoxSet(
                    _nums(s.get("state_lower", [None] * n), f"{sp}.state_lower", -math.inf),
                    _nums(s.get("state_upper", [None] * n), f"{sp}.state_upper", math.inf),
                ),
                steps=None if steps is None else _int(steps, f"{sp}.steps"),
            )
        )

    weights = _nums(_need(doc, "weights", ""), "weights")
    for i, w in enumerate(weights):
        if not w > 0:
            raise ProblemLoadError(f"weights[{i}]", f"weight not positive ({w!r}); weights must be positive")
    if normalize and weights:
        weights = normalize_weights(weights)

    goals = None
    if doc.get("goals") is not None:
        raw_goals = doc["goals"]
        if not isinstance(raw_goals, list):
            raise ProblemLoadError("goals", "expected an array")
        goals = []
        for i, g in enumerate(raw_goals):
            gid = _need(g, "id", f"goals[{i}]")
            goals.append((gid, _num(_need(g, "J_star", f"goals[{i}]"), f"goals[{i}].J_star")))
        goals = tuple(goals)

    spec = ProblemSpec(
        scenarios=tuple(scenarios),
        p=p,
        theta_bounds=BoxSet(lower, upper),
        theta_init=init,
        weights=weights,
        options=_options(doc.get("options")),
        goals=goals,
    )
    if strict:
        report = validate_problem(spec)
        if not report.ok:
            f = report.findings[0]
            raise ProblemLoadError(_finding_path(spec, f.scenario, f.field), f.rule)
    return spec


def _finding_path(spec: ProblemSpec, sid: str | None, field_name: str) -> str:
    if sid is not None and sid in spec.ids and not field_name.startswith(("weights", "goals")):
        return f"scenarios[{spec.ids.index(sid)}].{field_name}"
    return field_name


def load_problem(text: str, strict: bool = True, normalize: bool = True) -> ProblemSpec:
    """Parse a JSON problem document into a :class:`ProblemSpec`.

    With ``strict`` the first validation finding aborts the load. Weights are
    scaled to unit sum unless ``normalize`` is false.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ProblemLoadError(f"offset {err.pos}", f"invalid JSON: {err.msg}") from None
    return spec_from_dict(doc, strict=strict, normalize=normalize)


def problem_to_dict(spec: ProblemSpec) -> dict:
    opts = spec.options
    doc: dict = {
        "schema": SCHEMA_VERSION,
        "parameters": {
            "dim": spec.p,
            "lower": _bound_list(spec.theta_bounds.lower),
            "upper": _bound_list(spec.theta_bounds.upper),
            "init": list(spec.theta_init),
        },
        "weights": list(spec.weights),
        "scenarios": [],
        "options": {f.name: getattr(opts, f.name) for f in fields(SolverOptions)},
    }
    for s in spec.scenarios:
        entry = {
            "id": s.id,
            "dynamics": [ex.to_text(e) for e in s.dynamics],
            "x0": list(s.x0),
            "t0": s.t0,
            "tf": s.tf,
            "terminal_cost": ex.to_text(s.terminal_cost),
            "running_cost": ex.to_text(s.running_cost),
            "state_lower": _bound_list(s.state_bounds.lower),
            "state_upper": _bound_list(s.state_bounds.upper),
        }
        if s.steps is not None:
            entry["steps"] = s.steps
        doc["scenarios"].append(entry)
    if spec.goals is not None:
        doc["goals"] = [{"id": k, "J_star": v} for k, v in spec.goals]
    return doc


def dump_problem(spec: ProblemSpec) -> str:
    return dumps(problem_to_dict(spec)) + "\n"


# --------------------------------------------------------------------------
# results


def goals_to_dict(goals: GoalSet) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "kind": "goals",
        "entries": [
            {
                "id": e.scenario_id,
                "theta": None if e.theta is None else list(e.theta),
                "J_star": e.J_star,
                "status": e.status,
            }
            for e in goals.entries
        ],
    }


def load_goals(text: str) -> GoalSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ProblemLoadError(f"offset {err.pos}", f"invalid JSON: {err.msg}") from None
    if _need(doc, "kind", "") != "goals":
        raise ProblemLoadError("kind", "not a goals document")
    raw = _need(doc, "entries", "")
    if not isinstance(raw, list):
        raise ProblemLoadError("entries", "expected an array")
    entries = []
    for i, e in enumerate(raw):
        ep = f"entries[{i}]"
        theta = e.get("theta") if isinstance(e, dict) else None
        entries.append(
            GoalEntry(
                scenario_id=_need(e, "id", ep),
                theta=None if theta is None else _nums(theta, f"{ep}.theta"),
                J_star=_num(_need(e, "J_star", ep), f"{ep}.J_star"),
                status=str(e.get("status", "given")),
            )
        )
    return GoalSet(tuple(entries))


def solution_to_dict(sol: GoalSolution) -> dict:
    s = sol.solver
    return {
        "schema": SCHEMA_VERSION,
        "kind": "solution",
        "aggregation": sol.aggregation_used,
        "status": s.status,
        "theta": list(sol.theta_star),
        "gamma": list(sol.gamma),
        "objective": sol.objective,
        "scenarios": [
            {
                "id": sid,
                "J_star": sol.goals[i],
                "J": c.total,
                "terminal": c.terminal_part,
                "running": c.running_part,
                "bound_penalty": c.bound_penalty,
                "weight": sol.weights[i],
                "gamma": sol.gamma[i],
            }
            for i, (sid, c) in enumerate(zip(sol.scenario_ids, sol.costs))
        ],
        "solver": {
            "status": s.status,
            "iterations": s.iterations,
            "f_star": s.f_star,
            "kkt_residual": s.kkt_residual,
            "feasibility_residual": s.feasibility_residual,
            "multipliers": list(s.multipliers),
            "z_star": list(s.z_star),
        },
    }


def sweep_to_csv(table: SweepTable) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header())
    for r in table.rows:
        w.writerow([fmt_float(v) for v in (*r.weights, *r.theta, *r.gamma, *r.costs)] + [r.status.replace(",", ";")])
    return buf.getvalue()


def sweep_plot_data_csv(table: SweepTable) -> str:
    """Plot-ready columns: row index, weights, achieved costs, worst attainment."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    ids = table.scenario_ids
    w.writerow(["row"] + [f"w_{s}" for s in ids] + [f"J_{s}" for s in ids] + ["gamma_max"])
    for k, r in enumerate(table.rows):
        gmax = max(r.gamma) if all(math.isfinite(g) for g in r.gamma) else math.nan
        w.writerow([k] + [fmt_float(v) for v in (*r.weights, *r.costs, gmax)])
    return buf.getvalue()


def write_results(obj, path) -> None:
    """Write goals or a solution as JSON, a sweep table or trajectory as CSV."""
    if isinstance(obj, GoalSet):
        text = dumps(goals_to_dict(obj)) + "\n"
    elif isinstance(obj, GoalSolution):
        text = dumps(solution_to_dict(obj)) + "\n"
    elif isinstance(obj, SweepTable):
        text = sweep_to_csv(obj)
    elif isinstance(obj, Trajectory):
        text = obj.to_csv()
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def read_weight_grid(text: str) -> list[tuple[float, ...]]:
    """One weight vector per CSV row; blank lines and ``#`` comments are skipped.

    A first row that does not parse as numbers is treated as a header.
    """
    rows = []
    header_allowed = True
    for lineno, row in enumerate(csv.reader(_io.StringIO(text)), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        try:
            rows.append(tuple(float(v) for v in row))
        except ValueError:
            if header_allowed:
                header_allowed = False
                continue
            raise ProblemLoadError(f"line {lineno}", f"non-numeric weight in {row!r}") from None
        header_allowed = False
    return rows
