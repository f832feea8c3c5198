"""Two-stage goal attainment over a set of operating scenarios.

Stage 1 minimises each scenario's cost on its own, giving a goal ``J_i*``.
Stage 2 looks for one parameter vector that meets all goals as closely as
the weights allow, by minimising the attainment level ``gamma`` subject to::

    J_i(theta) - gamma_i * w_i <= J_i*        for every scenario i

A small ``w_i`` makes goal ``i`` hard to relax, a large one lets it slip.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from attain.cost import CostError, CostValue, evaluate_all, evaluate_cost
from attain.model import ProblemSpec, SolverOptions
from attain.sqp import NlpProblem, NlpSolution, solve_nlp

log = logging.getLogger(__name__)


class WeightError(ValueError):
    pass


def normalize_weights(w: Sequence[float]) -> tuple[float, ...]:
    """Scale positive weights to sum to one."""
    w = [float(v) for v in w]
    if not w:
        raise WeightError("weight vector is empty")
    for i, v in enumerate(w):
        if not (v > 0.0) or not math.isfinite(v):
            raise WeightError(f"weight not positive: w[{i}] = {v!r}")
    total = math.fsum(w)
    if abs(total - 1.0) > 1e-9:
        log.info("weights sum to %.17g; normalising to unit sum", total)
    if abs(total - 1.0) <= 1e-12:
        # already normalised; dividing again would only perturb the last bits
        return tuple(w)
    return tuple(v / total for v in w)


# --------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class GoalEntry:
    scenario_id: str
    theta: tuple[float, ...] | None
    J_star: float
    status: str


@dataclass(frozen=True)
class GoalSet:
    entries: tuple[GoalEntry, ...]

    @property
    def ids(self) -> list[str]:
        return [e.scenario_id for e in self.entries]

    def values_for(self, spec: ProblemSpec) -> np.ndarray:
        """Goal values in the scenario order of ``spec``."""
        by_id = {e.scenario_id: e.J_star for e in self.entries}
        missing = [sid for sid in spec.ids if sid not in by_id]
        if missing:
            raise KeyError(f"no goal for scenario(s) {', '.join(missing)}")
        return np.array([by_id[sid] for sid in spec.ids])

    @classmethod
    def from_values(cls, pairs: Sequence[tuple[str, float]]) -> "GoalSet":
        return cls(tuple(GoalEntry(sid, None, float(v), "given") for sid, v in pairs))


@dataclass(eq=False)
class GoalSolution:
    theta_star: np.ndarray
    gamma: np.ndarray
    costs: list[CostValue]
    goals: np.ndarray
    weights: np.ndarray
    aggregation_used: str
    solver: NlpSolution
    scenario_ids: list[str] = field(default_factory=list)
    # attainment level carried by the solver (minimax only)
    gamma_level: float | None = None

    @property
    def achieved(self) -> np.ndarray:
        return np.array([c.total for c in self.costs])

    @property
    def objective(self) -> float:
        if self.aggregation_used == "minimax":
            return float(np.max(self.gamma))
        return float(np.sum(self.gamma))

    @property
    def status(self) -> str:
        return self.solver.status


# --------------------------------------------------------------------------
# stage 1


def _start_points(spec: ProblemSpec, opts: SolverOptions, index: int) -> list[np.ndarray]:
    starts = [np.array(spec.theta_init)]
    if opts.multistart_count:
        rng = np.random.default_rng([opts.seed, index])
        init = np.array(spec.theta_init)
        lo = np.array(spec.theta_bounds.lower)
        hi = np.array(spec.theta_bounds.upper)
        span = 1.0 + np.abs(init)
        lo = np.where(np.isfinite(lo), lo, init - span)
        hi = np.where(np.isfinite(hi), hi, init + span)
        for _ in range(opts.multistart_count):
            starts.append(rng.uniform(lo, hi))
    return starts


def run_stage1(spec: ProblemSpec, opts: SolverOptions | None = None) -> GoalSet:
    """Per-scenario optimum ``(theta_i*, J_i*)`` over the parameter box.

    Runs one SQP from ``theta_init`` plus ``multistart_count`` seeded uniform
    starts and keeps the lowest cost, preferring converged runs and then the
    earliest start.
    """
    opts = opts or spec.options
    entries = []
    for i, scenario in enumerate(spec.scenarios):
        nlp = NlpProblem(
            objective=lambda th, s=scenario: evaluate_cost(s, th, opts).total,
            dim=spec.p,
            lower=np.array(spec.theta_bounds.lower),
            upper=np.array(spec.theta_bounds.upper),
        )
        best = None
        errors = []
        for k, z0 in enumerate(_start_points(spec, opts, i)):
            try:
                sol = solve_nlp(nlp, z0, opts)
            except CostError as err:
                errors.append(str(err))
                continue
            key = (0 if sol.converged else 1, sol.f_star, k)
            if best is None or key < best[0]:
                best = (key, sol)
        if best is None:
            entries.append(GoalEntry(scenario.id, None, math.nan, "error: " + "; ".join(errors)))
            continue
        sol = best[1]
        entries.append(GoalEntry(scenario.id, tuple(float(v) for v in sol.z_star), float(sol.f_star), sol.status))
    return GoalSet(tuple(entries))


# --------------------------------------------------------------------------
# stage 2


def _cached_costs(spec: ProblemSpec, opts: SolverOptions):
    @lru_cache(maxsize=4096)
    def costs(theta: tuple[float, ...]) -> tuple[float, ...]:
        return tuple(c.total for c in evaluate_all(spec, theta, opts))

    return costs


def _attainment_gap(J: np.ndarray, goals: np.ndarray, w: np.ndarray) -> np.ndarray:
    return (J - goals) / w


def run_goal_attainment(
    spec: ProblemSpec,
    goals: GoalSet,
    opts: SolverOptions | None = None,
    weights: Sequence[float] | None = None,
    trace_path=None,
) -> GoalSolution:
    """Solve for a single parameter vector across all scenarios.

    ``weights`` default to ``spec.weights`` and are used exactly as given.
    """
    opts = opts or spec.options
    w = np.array(spec.weights if weights is None else weights, dtype=float)
    if np.any(~(w > 0)):
        raise WeightError("weight not positive")
    J_star = goals.values_for(spec)
    N, p = spec.N, spec.p
    costs = _cached_costs(spec, opts)

    theta0 = np.array(spec.theta_init)
    if opts.warm_start == "best_stage1":
        candidates = [np.array(e.theta) for e in goals.entries if e.theta is not None]
        if candidates:
            scores = [np.max(_attainment_gap(np.array(costs(tuple(c))), J_star, w)) for c in candidates]
            theta0 = candidates[int(np.argmin(scores))]
    gap0 = _attainment_gap(np.array(costs(tuple(theta0))), J_star, w)

    lo = np.array(spec.theta_bounds.lower)
    hi = np.array(spec.theta_bounds.upper)
    if opts.aggregation == "minimax":
        n_gamma = 1
        z0 = np.concatenate([theta0, [np.max(gap0) + 1.0]])

        def objective(z):
            return float(z[p])

        def constraints(z):
            return np.array(costs(tuple(z[:p]))) - z[p] * w - J_star

    else:
        n_gamma = N
        z0 = np.concatenate([theta0, gap0 + 1.0])

        def objective(z):
            return float(np.sum(z[p:]))

        def constraints(z):
            return np.array(costs(tuple(z[:p]))) - z[p:] * w - J_star

    nlp = NlpProblem(
        objective=objective,
        dim=p + n_gamma,
        constraints=constraints,
        n_constraints=N,
        lower=np.concatenate([lo, np.full(n_gamma, -np.inf)]),
        upper=np.concatenate([hi, np.full(n_gamma, np.inf)]),
    )
    sol = solve_nlp(nlp, z0, opts, trace_path=trace_path)
    theta_star = sol.z_star[:p].copy()
    values = evaluate_all(spec, theta_star, opts)
    J = np.array([c.total for c in values])
    return GoalSolution(
        theta_star=theta_star,
        gamma=_attainment_gap(J, J_star, w),
        costs=values,
        goals=J_star,
        weights=w,
        aggregation_used=opts.aggregation,
        solver=sol,
        scenario_ids=spec.ids,
        gamma_level=float(sol.z_star[p]) if opts.aggregation == "minimax" else None,
    )


def feasibility_violations(spec: ProblemSpec, solution: GoalSolution, tol: float) -> list[str]:
    """Re-simulate at ``theta_star`` and list every goal constraint broken by more than ``tol``."""
    J = np.array([c.total for c in evaluate_all(spec, solution.theta_star, spec.options)])
    out = []
    levels = [("gamma_i", solution.gamma)]
    if solution.gamma_level is not None:
        levels.append(("gamma", np.full(len(J), solution.gamma_level)))
    for name, g in levels:
        excess = J - g * solution.weights - solution.goals
        for i, e in enumerate(excess):
            if e > tol:
                out.append(f"{spec.ids[i]}: J - {name}*w exceeds goal by {e:.3e}")
    return out


# --------------------------------------------------------------------------
# reporting


@dataclass(frozen=True)
class AttainmentRow:
    scenario_id: str
    goal: float
    achieved: float
    deviation: float
    gamma: float
    classification: str


@dataclass(frozen=True)
class AttainmentReport:
    rows: tuple[AttainmentRow, ...]
    tol: float

    def format(self) -> str:
        lines = [f"{'scenario':<16}{'goal':>14}{'achieved':>14}{'deviation':>14}{'gamma':>12}  status"]
        for r in self.rows:
            lines.append(
                f"{r.scenario_id:<16}{r.goal:>14.6g}{r.achieved:>14.6g}{r.deviation:>14.6g}{r.gamma:>12.4f}  {r.classification}"
            )
        return "\n".join(lines)


def classify(deviation: float, tol: float) -> str:
    if deviation > tol:
        return "under-attained"
    if deviation < -tol:
        return "over-attained"
    return "met"


def attainment_report(spec: ProblemSpec, goals: GoalSet, solution: GoalSolution) -> AttainmentReport:
    tol = spec.options.feas_tol
    J_star = goals.values_for(spec)
    rows = []
    for i, sid in enumerate(spec.ids):
        achieved = solution.costs[i].total
        dev = achieved - J_star[i]
        rows.append(AttainmentRow(sid, float(J_star[i]), achieved, dev, dev / solution.weights[i], classify(dev, tol)))
    return AttainmentReport(tuple(rows), tol)


# --------------------------------------------------------------------------
# weight sweep


@dataclass(frozen=True)
class SweepRow:
    weights: tuple[float, ...]
    theta: tuple[float, ...]
    gamma: tuple[float, ...]
    costs: tuple[float, ...]
    status: str


@dataclass(frozen=True)
class SweepTable:
    scenario_ids: tuple[str, ...]
    p: int
    rows: tuple[SweepRow, ...] = ()

    def header(self) -> list[str]:
        ids = self.scenario_ids
        return (
            [f"w_{s}" for s in ids]
            + [f"theta{j}" for j in range(self.p)]
            + [f"gamma_{s}" for s in ids]
            + [f"J_{s}" for s in ids]
            + ["status"]
        )


def weight_sweep(
    spec: ProblemSpec,
    goals: GoalSet,
    weight_list: Sequence[Sequence[float]],
    opts: SolverOptions | None = None,
    normalize: bool = True,
) -> SweepTable:
    """One goal-attainment solve per weight vector, all from ``theta_init``."""
    opts = replace(opts or spec.options, warm_start="theta_init")
    rows = []
    nan_p = (math.nan,) * spec.p
    nan_n = (math.nan,) * spec.N
    for raw in weight_list:
        try:
            if len(raw) != spec.N:
                raise WeightError(f"expected {spec.N} weights, got {len(raw)}")
            w = normalize_weights(raw) if normalize else tuple(float(v) for v in raw)
            sol = run_goal_attainment(spec, goals, opts, weights=w)
        except (WeightError, CostError) as err:
            rows.append(SweepRow(tuple(float(v) for v in raw), nan_p, nan_n, nan_n, f"error: {err}"))
            continue
        rows.append(
            SweepRow(
                w,
                tuple(float(v) for v in sol.theta_star),
                tuple(float(v) for v in sol.gamma),
                tuple(float(v) for v in sol.achieved),
                sol.status,
            )
        )
    return SweepTable(tuple(spec.ids), spec.p, tuple(rows))
