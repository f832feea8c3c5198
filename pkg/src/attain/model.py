"""Problem description types and structural validation.

Every type here is a frozen dataclass holding tuples, so problem specs are
hashable, comparable and safe to share between evaluators.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from attain import expr as ex

AGGREGATIONS = ("minimax", "weighted_sum")
STATE_BOUND_MODES = ("monitor", "penalize", "reject")
WARM_STARTS = ("theta_init", "best_stage1")


def _floats(values: Sequence[float]) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class BoxSet:
    """Axis-aligned box ``lower <= v <= upper``; infinite entries leave a side open."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", _floats(self.lower))
        object.__setattr__(self, "upper", _floats(self.upper))

    @classmethod
    def unbounded(cls, n: int) -> "BoxSet":
        return cls((-math.inf,) * n, (math.inf,) * n)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, v: Sequence[float], tol: float = 0.0) -> bool:
        return all(lo - tol <= x <= hi + tol for x, lo, hi in zip(v, self.lower, self.upper))

    def clip(self, v: Sequence[float]) -> np.ndarray:
        return np.clip(np.asarray(v, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class SolverOptions:
    integrator_steps: int = 200
    fd_step_scale: float = float(np.finfo(float).eps ** (1.0 / 3.0))
    kkt_tol: float = 1e-6
    feas_tol: float = 1e-8
    max_iter: int = 200
    max_backtracks: int = 40
    aggregation: str = "minimax"
    state_bound_mode: str = "monitor"
    penalty_coefficient: float = 1e3
    multistart_count: int = 0
    seed: int = 0
    warm_start: str = "theta_init"
    jobs: int = 1

    def problems(self) -> list[str]:
        out = []
        for name in ("fd_step_scale", "kkt_tol", "feas_tol"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                out.append(f"{name} must be a positive finite number")
        if self.penalty_coefficient < 0:
            out.append("penalty_coefficient must be non-negative")
        if self.integrator_steps < 1:
            out.append("integrator_steps must be >= 1")
        if self.max_iter < 1:
            out.append("max_iter must be >= 1")
        if self.max_backtracks < 1:
            out.append("max_backtracks must be >= 1")
        if self.multistart_count < 0:
            out.append("multistart_count must be >= 0")
        if self.jobs < 1:
            out.append("jobs must be >= 1")
        if self.aggregation not in AGGREGATIONS:
            out.append(f"aggregation must be one of {AGGREGATIONS}")
        if self.state_bound_mode not in STATE_BOUND_MODES:
            out.append(f"state_bound_mode must be one of {STATE_BOUND_MODES}")
        if self.warm_start not in WARM_STARTS:
            out.append(f"warm_start must be one of {WARM_STARTS}")
        return out


@dataclass(frozen=True)
class Scenario:
    """One operating condition: its dynamics, initial state, horizon and Bolza cost.

    ``terminal_cost`` is evaluated at the final state (variables ``x*``,
    ``theta*``, ``tf``); ``running_cost`` is integrated over ``[t0, tf]``.
    ``steps`` overrides :attr:`SolverOptions.integrator_steps` when set.
    """

    id: str
    dynamics: tuple[ex.Expr, ...]
    x0: tuple[float, ...]
    t0: float
    tf: float
    terminal_cost: ex.Expr
    running_cost: ex.Expr
    state_bounds: BoxSet
    steps: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "dynamics", tuple(self.dynamics))
        object.__setattr__(self, "x0", _floats(self.x0))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "tf", float(self.tf))

    @property
    def n(self) -> int:
        return len(self.x0)

    @cached_property
    def rhs(self):
        """Compiled ``f(t, tf, x, theta)`` returning dynamics followed by the running cost."""
        return ex.compile_vector(self.dynamics + (self.running_cost,))

    @cached_property
    def terminal(self):
        return ex.compile_vector((self.terminal_cost,))

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass(frozen=True)
class ProblemSpec:
    scenarios: tuple[Scenario, ...]
    p: int
    theta_bounds: BoxSet
    theta_init: tuple[float, ...]
    weights: tuple[float, ...]
    options: SolverOptions = field(default_factory=SolverOptions)
    # optional user goals J_i* keyed by scenario id
    goals: tuple[tuple[str, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "theta_init", _floats(self.theta_init))
        object.__setattr__(self, "weights", _floats(self.weights))
        if self.goals is not None:
            object.__setattr__(self, "goals", tuple((str(k), float(v)) for k, v in self.goals))

    @property
    def N(self) -> int:
        return len(self.scenarios)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.scenarios]

    def scenario(self, sid: str) -> Scenario:
        for s in self.scenarios:
            if s.id == sid:
                return s
        raise KeyError(f"no scenario with id '{sid}'")

    def with_(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)


@dataclass(frozen=True)
class Finding:
    scenario: str | None
    field: str
    rule: str

    def __str__(self) -> str:
        where = f"scenario '{self.scenario}' " if self.scenario is not None else ""
        return f"{where}{self.field}: {self.rule}"


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    def __iter__(self):
        return iter(self.findings)

    def __len__(self) -> int:
        return len(self.findings)


_INDEXED = re.compile(r"^(x|theta)(\d+)$")


def _check_box(box: BoxSet, name: str, sid: str | None, out: list[Finding]) -> None:
    if len(box.lower) != len(box.upper):
        out.append(Finding(sid, name, "lower and upper bounds differ in length"))
        return
    for j, (lo, hi) in enumerate(zip(box.lower, box.upper)):
        if math.isnan(lo) or math.isnan(hi):
            out.append(Finding(sid, f"{name}[{j}]", "bound is NaN"))
        elif lo > hi:
            out.append(Finding(sid, f"{name}[{j}]", "lower bound exceeds upper bound"))


def _check_vars(e: ex.Expr, allowed: set[str], n: int, p: int, name: str, sid: str, out: list[Finding]) -> None:
    for v in sorted(ex.free_variables(e)):
        m = _INDEXED.match(v)
        if m:
            limit = n if m.group(1) == "x" else p
            if int(m.group(2)) >= limit:
                out.append(Finding(sid, name, f"variable '{v}' out of range (dimension {limit})"))
                continue
            base = m.group(1)
        else:
            base = v
        if base not in allowed:
            out.append(Finding(sid, name, f"variable '{v}' not available here"))


def validate_problem(spec: ProblemSpec) -> ValidationReport:
    """Check every structural rule on ``spec`` and return the findings.

    Scenarios must share the state dimension of the first scenario and a
    single parameter vector of dimension ``p``.
    """
    out: list[Finding] = []
    if spec.N < 1:
        out.append(Finding(None, "scenarios", "at least one scenario required"))
    if spec.p < 1:
        out.append(Finding(None, "parameters.dim", "parameter dimension must be >= 1"))
    if len(spec.theta_init) != spec.p:
        out.append(Finding(None, "parameters.init", "length differs from parameter dimension"))
    if not all(math.isfinite(v) for v in spec.theta_init):
        out.append(Finding(None, "parameters.init", "entries must be finite"))
    if spec.theta_bounds.dim != spec.p or len(spec.theta_bounds.upper) != spec.p:
        out.append(Finding(None, "parameters.bounds", "length differs from parameter dimension"))
    else:
        _check_box(spec.theta_bounds, "parameters.bounds", None, out)
        if len(spec.theta_init) == spec.p and not spec.theta_bounds.contains(spec.theta_init):
            out.append(Finding(None, "parameters.init", "initial parameters outside bounds"))

    if len(spec.weights) != spec.N:
        out.append(Finding(None, "weights", f"expected {spec.N} weights, got {len(spec.weights)}"))
    for i, w in enumerate(spec.weights):
        if not (w > 0) or not math.isfinite(w):
            sid = spec.scenarios[i].id if i < spec.N else None
            out.append(Finding(sid, f"weights[{i}]", "weight not positive"))

    for msg in spec.options.problems():
        out.append(Finding(None, "options", msg))

    seen: set[str] = set()
    n_ref = spec.scenarios[0].n if spec.scenarios else 0
    for s in spec.scenarios:
        sid = s.id
        if sid in seen:
            out.append(Finding(sid, "id", "duplicate scenario id"))
        seen.add(sid)
        if s.n != n_ref:
            out.append(Finding(sid, "x0", f"state dimension mismatch ({s.n} vs {n_ref})"))
        if len(s.dynamics) != s.n:
            out.append(Finding(sid, "dynamics", f"dynamics length {len(s.dynamics)} differs from state dimension {s.n}"))
        if s.n < 1:
            out.append(Finding(sid, "x0", "state dimension must be >= 1"))
        if not all(math.isfinite(v) for v in s.x0):
            out.append(Finding(sid, "x0", "entries must be finite"))
        if not (math.isfinite(s.t0) and math.isfinite(s.tf)):
            out.append(Finding(sid, "tf", "horizon must be finite"))
        elif not s.tf > s.t0:
            out.append(Finding(sid, "tf", "final time must exceed initial time"))
        if s.steps is not None and s.steps < 1:
            out.append(Finding(sid, "steps", "integrator steps must be >= 1"))
        if s.state_bounds.dim != s.n or len(s.state_bounds.upper) != s.n:
            out.append(Finding(sid, "state_bounds", "length differs from state dimension"))
        else:
            _check_box(s.state_bounds, "state_bounds", sid, out)
            if not s.state_bounds.contains(s.x0):
                out.append(Finding(sid, "x0", "initial state outside state bounds"))
        for j, e in enumerate(s.dynamics):
            _check_vars(e, {"t", "tf", "x", "theta"}, s.n, spec.p, f"dynamics[{j}]", sid, out)
        _check_vars(s.running_cost, {"t", "tf", "x", "theta"}, s.n, spec.p, "running_cost", sid, out)
        _check_vars(s.terminal_cost, {"tf", "x", "theta"}, s.n, spec.p, "terminal_cost", sid, out)

    if spec.goals is not None:
        gid = [g[0] for g in spec.goals]
        if sorted(gid) != sorted(spec.ids):
            out.append(Finding(None, "goals", "goals must name every scenario exactly once"))
        for k, v in spec.goals:
            if not math.isfinite(v):
                out.append(Finding(k, "goals", "goal value must be finite"))
    return ValidationReport(tuple(out))
