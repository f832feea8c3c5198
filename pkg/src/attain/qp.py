"""Dense primal active-set solver for small convex QPs.

Solves::

    min  0.5 d'Hd + g'd
    s.t. A d <= b,  lower <= d <= upper

Bounds and general inequalities share one working set. Rows are numbered
general inequalities first, then finite upper bounds, then finite lower
bounds; the smallest-index rule on both adding and dropping rows rules out
cycling. When ``d = clip(0)`` violates a row, a phase-1 problem with one
elastic slack finds a feasible start or proves infeasibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["QpProblem", "QpResult", "QpInfeasible", "QpIterationLimit", "solve_qp", "kkt_residuals"]


class QpInfeasible(ValueError):
    """The constraint set is empty; ``residual`` is the minimal phase-1 slack."""

    def __init__(self, residual: float):
        super().__init__(f"QP infeasible: smallest achievable violation {residual:.3e}")
        self.residual = residual


class QpIterationLimit(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        m = len(self.g)
        object.__setattr__(self, "H", np.asarray(self.H, dtype=float).reshape(m, m))
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))
        if self.A is None or np.size(self.A) == 0:
            A, b = np.zeros((0, m)), np.zeros(0)
        else:
            A, b = np.asarray(self.A, dtype=float).reshape(-1, m), np.asarray(self.b, dtype=float).ravel()
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        lo = np.full(m, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        hi = np.full(m, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def m(self) -> int:
        return len(self.g)

    @property
    def k(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class QpResult:
    d: np.ndarray
    lam: np.ndarray  # general inequalities, length k
    lam_upper: np.ndarray  # length m, zero where the bound is infinite
    lam_lower: np.ndarray
    active_set: tuple[tuple[str, int], ...]
    iterations: int
    regularization: float = 0.0
    phase1: bool = field(default=False)

    @property
    def multipliers(self) -> np.ndarray:
        return np.concatenate([self.lam, self.lam_upper, self.lam_lower])


def _regularize(H: np.ndarray) -> tuple[np.ndarray, float]:
    H = 0.5 * (H + H.T)
    tau = 0.0
    eye = np.eye(len(H))
    while True:
        try:
            np.linalg.cholesky(H + tau * eye)
            return H + tau * eye, tau
        except np.linalg.LinAlgError:
            tau = 1e-8 if tau == 0.0 else tau * 10.0
            if tau > 1e20:
                raise ValueError("QP Hessian could not be regularised") from None


def _rows(qp: QpProblem) -> tuple[np.ndarray, np.ndarray, list[tuple[str, int]]]:
    m = qp.m
    rows, rhs, labels = [], [], []
    for i in range(qp.k):
        rows.append(qp.A[i])
        rhs.append(qp.b[i])
        labels.append(("ineq", i))
    for j in range(m):
        if np.isfinite(qp.upper[j]):
            e = np.zeros(m)
            e[j] = 1.0
            rows.append(e)
            rhs.append(qp.upper[j])
            labels.append(("upper", j))
    for j in range(m):
        if np.isfinite(qp.lower[j]):
            e = np.zeros(m)
            e[j] = -1.0
            rows.append(e)
            rhs.append(-qp.lower[j])
            labels.append(("lower", j))
    C = np.array(rows).reshape(len(rows), m)
    return C, np.array(rhs, dtype=float), labels


def _eqp(H: np.ndarray, grad: np.ndarray, Cw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Step p and multipliers for min 0.5p'Hp + grad'p s.t. Cw p = 0."""
    m, w = len(grad), len(Cw)
    if w == 0:
        return np.linalg.solve(H, -grad), np.zeros(0)
    K = np.zeros((m + w, m + w))
    K[:m, :m] = H
    K[:m, m:] = Cw.T
    K[m:, :m] = Cw
    rhs = np.concatenate([-grad, np.zeros(w)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:m], sol[m:]


def _active_set(H, c, C, r, x, max_iter):
    """Primal active-set iterations from a (near-)feasible ``x`` with an empty working set."""
    W: list[int] = []
    lam_w = np.zeros(0)
    # after an unblocked full step x already minimises over the working set
    full_step = False
    for it in range(1, max_iter + 1):
        grad = H @ x + c
        p, lam_w = _eqp(H, grad, C[W])
        scale = 1.0 + np.max(np.abs(x), initial=0.0)
        if full_step or np.max(np.abs(p), initial=0.0) <= 1e-14 * scale:
            full_step = False
            gscale = max(1.0, np.max(np.abs(grad), initial=0.0))
            negative = [(W[q], q) for q in range(len(W)) if lam_w[q] < -1e-12 * gscale]
            if not negative:
                return x, W, lam_w, it
            _, q = min(negative)
            W.pop(q)
            continue
        alpha, block = 1.0, None
        Cp = C @ p
        pnorm = np.max(np.abs(p))
        for i in range(len(r)):
            if i in W or Cp[i] <= 1e-14 * pnorm * max(1.0, np.max(np.abs(C[i]))):
                continue
            a_i = max(0.0, (r[i] - C[i] @ x) / Cp[i])
            if a_i < alpha:
                alpha, block = a_i, i
        x = x + alpha * p
        full_step = block is None
        if block is not None:
            W.append(block)
            W.sort()
    raise QpIterationLimit(f"active-set iteration limit {max_iter} reached")


def solve_qp(qp: QpProblem, tol: float = 1e-9, max_iter: int | None = None) -> QpResult:
    """Minimise the QP; raise :class:`QpInfeasible` when no feasible point exists.

    Hessians that fail a Cholesky test are shifted by ``tau * I`` with
    ``tau = 1e-8, 1e-7, ...``; the shift used is returned as ``regularization``.
    """
    H, tau = _regularize(qp.H)
    m = qp.m
    if np.any(qp.lower > qp.upper):
        j = int(np.argmax(qp.lower - qp.upper))
        raise QpInfeasible(float(qp.lower[j] - qp.upper[j]))
    C, r, labels = _rows(qp)
    n_rows = len(r)
    max_iter = max_iter or 50 * (m + n_rows + 1)

    x = np.clip(np.zeros(m), qp.lower, qp.upper)
    viol = float(np.max(C @ x - r, initial=0.0))
    used_phase1 = False
    if viol > 0.0:
        used_phase1 = True
        # elastic phase 1 over (x, s): rows C x - s <= r for general inequalities,
        # plain bound rows, and -s <= 0
        k = qp.k
        C1 = np.zeros((n_rows + 1, m + 1))
        C1[:n_rows, :m] = C
        C1[:k, m] = -1.0
        C1[n_rows, m] = -1.0
        r1 = np.concatenate([r, [0.0]])
        bound_viol = float(np.max(C[k:] @ x - r[k:], initial=0.0))
        if bound_viol > 0.0:
            raise QpInfeasible(bound_viol)
        eps = 1e-8
        H1 = eps * np.eye(m + 1)
        c1 = np.concatenate([-eps * x, [1.0]])
        z0 = np.concatenate([x, [viol]])
        z, _, _, _ = _active_set(H1, c1, C1, r1, z0, max_iter)
        x = z[:m]
        residual = float(np.max(C @ x - r, initial=0.0))
        if residual > tol:
            raise QpInfeasible(residual)

    x, W, lam_w, iters = _active_set(H, qp.g, C, r, x, max_iter)
    lam_rows = np.zeros(n_rows)
    lam_rows[W] = np.maximum(lam_w, 0.0)
    lam = np.zeros(qp.k)
    lam_u = np.zeros(m)
    lam_l = np.zeros(m)
    for i, (kind, j) in enumerate(labels):
        {"ineq": lam, "upper": lam_u, "lower": lam_l}[kind][j] = lam_rows[i]
    active = tuple(labels[i] for i in W)
    return QpResult(x, lam, lam_u, lam_l, active, iters, tau, used_phase1)


def kkt_residuals(qp: QpProblem, res: QpResult) -> dict[str, float]:
    """Stationarity, primal feasibility, dual feasibility and complementarity residuals."""
    H = 0.5 * (qp.H + qp.H.T) + res.regularization * np.eye(qp.m)
    d = res.d
    stat = H @ d + qp.g + qp.A.T @ res.lam + res.lam_upper - res.lam_lower
    slack = qp.A @ d - qp.b
    # infinite bounds contribute a zero residual
    up = np.where(np.isfinite(qp.upper), d - np.where(np.isfinite(qp.upper), qp.upper, 0.0), 0.0)
    lo = np.where(np.isfinite(qp.lower), np.where(np.isfinite(qp.lower), qp.lower, 0.0) - d, 0.0)
    primal = max(np.max(slack, initial=0.0), np.max(up, initial=0.0), np.max(lo, initial=0.0), 0.0)
    dual = max(0.0, -np.min(res.multipliers, initial=0.0))
    comp = max(
        np.max(np.abs(res.lam * slack), initial=0.0),
        np.max(np.abs(res.lam_upper * up), initial=0.0),
        np.max(np.abs(res.lam_lower * lo), initial=0.0),
    )
    return {
        "stationarity": float(np.max(np.abs(stat), initial=0.0)),
        "primal": float(primal),
        "dual": float(dual),
        "complementarity": float(comp),
    }
