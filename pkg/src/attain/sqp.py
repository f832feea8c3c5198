"""SQP for smooth, bound-constrained NLPs with inequality constraints ``c(z) <= 0``.

Each iteration solves a QP built from a damped-BFGS Hessian estimate and the
linearised constraints, then backtracks on the l1 merit function
``f + rho * sum(max(c, 0))``. Derivatives come from central differences.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from attain.cost import jacobian
from attain.model import SolverOptions
from attain.qp import QpInfeasible, QpIterationLimit, QpProblem, solve_qp

log = logging.getLogger(__name__)

ARMIJO = 1e-4
STATUSES = ("converged", "max_iter", "line_search_failure", "qp_infeasible")
TRACE_FIELDS = ("iteration", "f", "merit", "step_length", "kkt_residual")


@dataclass(frozen=True, eq=False)
class NlpProblem:
    objective: Callable[[np.ndarray], float]
    dim: int
    constraints: Callable[[np.ndarray], np.ndarray] | None = None
    n_constraints: int = 0
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        lo = np.full(self.dim, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        hi = np.full(self.dim, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def c(self, z: np.ndarray) -> np.ndarray:
        if self.constraints is None or self.n_constraints == 0:
            return np.zeros(0)
        return np.asarray(self.constraints(z), dtype=float).reshape(self.n_constraints)


@dataclass(eq=False)
class NlpSolution:
    z_star: np.ndarray
    f_star: float
    multipliers: np.ndarray
    bound_multipliers_lower: np.ndarray
    bound_multipliers_upper: np.ndarray
    kkt_residual: float
    feasibility_residual: float
    iterations: int
    status: str
    message: str = ""
    trace: list[dict] = field(default_factory=list)
    hessian_resets: int = 0

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def damped_bfgs_update(B: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Powell-damped BFGS update; keeps ``B`` positive definite for any ``y``."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(s) < 1e-14:
        return B
    Bs = B @ s
    sBs = float(s @ Bs)
    sy = float(s @ y)
    if sBs <= 0.0:
        return B
    if sy >= 0.2 * sBs:
        r = y
    else:
        theta = 0.8 * sBs / (sBs - sy)
        r = theta * y + (1.0 - theta) * Bs
    B_new = B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / float(s @ r)
    return 0.5 * (B_new + B_new.T)


def kkt_residuals(
    g: np.ndarray,
    c: np.ndarray,
    J: np.ndarray,
    z: np.ndarray,
    lam: np.ndarray,
    mu_lower: np.ndarray,
    mu_upper: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
) -> tuple[float, float]:
    """``(kkt_residual, feasibility_residual)`` at ``z`` for the given multipliers.

    The KKT residual is the largest of stationarity, dual infeasibility and
    complementarity; feasibility covers both ``c(z) <= 0`` and the box.
    """
    grad_l = g + (J.T @ lam if lam.size else 0.0) + mu_upper - mu_lower
    stat = float(np.max(np.abs(grad_l), initial=0.0))
    dual = float(max(0.0, -np.min(np.concatenate([lam, mu_lower, mu_upper]), initial=0.0)))
    comp = float(np.max(np.abs(lam * c), initial=0.0)) if lam.size else 0.0
    with np.errstate(invalid="ignore"):
        up_gap = np.where(mu_upper > 0, mu_upper * np.abs(upper - z), 0.0)
        lo_gap = np.where(mu_lower > 0, mu_lower * np.abs(z - lower), 0.0)
    comp = max(comp, float(np.max(up_gap, initial=0.0)), float(np.max(lo_gap, initial=0.0)))
    feas = max(
        float(np.max(c, initial=0.0)),
        float(np.max(z - upper, initial=0.0)),
        float(np.max(lower - z, initial=0.0)),
    )
    return max(stat, dual, comp), feas


def residuals_at(nlp: NlpProblem, sol: NlpSolution, fd_step_scale: float) -> tuple[float, float]:
    """Recompute the KKT and feasibility residuals of ``sol`` from scratch."""
    z = sol.z_star
    g = jacobian(lambda v: np.array([nlp.objective(v)]), z, fd_step_scale)[0]
    c = nlp.c(z)
    J = jacobian(nlp.c, z, fd_step_scale) if c.size else np.zeros((0, nlp.dim))
    return kkt_residuals(
        g, c, J, z, sol.multipliers, sol.bound_multipliers_lower, sol.bound_multipliers_upper, nlp.lower, nlp.upper
    )


def _is_pd(B: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(B)
        return True
    except np.linalg.LinAlgError:
        return False


def _write_trace(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for r in rows:
            w.writerow(
                [r["iteration"]] + [format(float(r[k]), ".17g") for k in TRACE_FIELDS[1:]]
            )


def solve_nlp(
    nlp: NlpProblem,
    z0,
    opts: SolverOptions | None = None,
    trace_path=None,
) -> NlpSolution:
    opts = opts or SolverOptions()
    h = opts.fd_step_scale
    lo, hi = nlp.lower, nlp.upper
    z = np.asarray(z0, dtype=float).copy()
    zc = np.clip(z, lo, hi)
    if not np.array_equal(zc, z):
        log.warning("initial point outside bounds; projected onto the box")
    z = zc
    m = nlp.dim
    k = nlp.n_constraints

    def derivatives(v):
        g = jacobian(lambda u: np.array([nlp.objective(u)]), v, h)[0]
        J = jacobian(nlp.c, v, h) if k else np.zeros((0, m))
        return g, J

    f = float(nlp.objective(z))
    c = nlp.c(z)
    g, J = derivatives(z)
    B = np.eye(m)
    rho = 0.0
    lam = np.zeros(k)
    mu_l = np.zeros(m)
    mu_u = np.zeros(m)
    kkt = feas = math.inf
    status, message = "max_iter", ""
    trace: list[dict] = []
    resets = 0
    it = 0

    for it in range(1, opts.max_iter + 1):
        qp = QpProblem(B, g, J, -c, lo - z, hi - z)
        try:
            res = solve_qp(qp, tol=opts.feas_tol)
        except QpInfeasible as err:
            status, message = "qp_infeasible", str(err)
            break
        except QpIterationLimit as err:
            status, message = "qp_infeasible", str(err)
            break
        p = res.d
        lam, mu_l, mu_u = res.lam, res.lam_lower, res.lam_upper
        kkt, feas = kkt_residuals(g, c, J, z, lam, mu_l, mu_u, lo, hi)
        if kkt <= opts.kkt_tol and feas <= opts.feas_tol:
            status = "converged"
            trace.append(dict(iteration=it, f=f, merit=f + rho * np.sum(np.maximum(c, 0.0)), step_length=0.0, kkt_residual=kkt))
            break

        lam_max = float(np.max(lam, initial=0.0))
        if lam_max >= rho:
            rho = 2.0 * (lam_max + 1.0)
        viol = float(np.sum(np.maximum(c, 0.0)))
        merit0 = f + rho * viol
        slope = float(g @ p) - rho * viol

        alpha = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            z_try = np.clip(z + alpha * p, lo, hi)
            try:
                f_try = float(nlp.objective(z_try))
                c_try = nlp.c(z_try)
                merit = f_try + rho * float(np.sum(np.maximum(c_try, 0.0)))
                ok = math.isfinite(merit) and merit <= merit0 + ARMIJO * alpha * slope
                if ok:
                    g_try, J_try = derivatives(z_try)
            except Exception as err:  # noqa: BLE001 - failed probe counts as a rejected trial
                log.debug("trial step rejected: %s", err)
                ok = False
            if ok:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            status = "line_search_failure"
            message = f"no acceptable step after {opts.max_backtracks} halvings"
            break

        trace.append(dict(iteration=it, f=f_try, merit=merit, merit_before=merit0, step_length=alpha, kkt_residual=kkt))
        s = z_try - z
        # Lagrangian gradient difference at the new multipliers; bound terms are linear and cancel
        y = (g_try - g) + ((J_try - J).T @ lam if k else 0.0)
        B_new = damped_bfgs_update(B, s, y)
        if _is_pd(B_new):
            B = B_new
        else:
            B = np.eye(m)
            resets += 1
        z, f, c, g, J = z_try, f_try, c_try, g_try, J_try
    else:
        it = opts.max_iter
        message = f"iteration limit {opts.max_iter} reached"

    if trace_path is not None:
        _write_trace(trace_path, trace)
    return NlpSolution(
        z_star=z,
        f_star=f,
        multipliers=lam,
        bound_multipliers_lower=mu_l,
        bound_multipliers_upper=mu_u,
        kkt_residual=kkt,
        feasibility_residual=feas,
        iterations=it,
        status=status,
        message=message,
        trace=trace,
        hessian_resets=resets,
    )
