"""Fixed-step RK4 simulation of scenario dynamics.

The running cost is carried as one extra state ``q`` with ``q' = psi`` and
integrated in the same RK4 pass, so it inherits fourth-order accuracy.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from attain.expr import ExprDomainError, compile_vector
from attain.model import BoxSet, Scenario

DIVERGENCE_LIMIT = 1e12


class IntegrationError(ArithmeticError):
    """The state left the finite range, or a right-hand side hit a domain error."""

    def __init__(self, message: str, step: int, component: int | None):
        super().__init__(message)
        self.step = step
        self.component = component


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray  # (steps + 1,)
    states: np.ndarray  # (steps + 1, n)
    running_cost: np.ndarray  # (steps + 1,) accumulated integral of psi

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self) -> str:
        n = self.states.shape[1]
        buf = io.StringIO()
        buf.write(",".join(["t"] + [f"x{j}" for j in range(n)] + ["q"]) + "\n")
        for k in range(len(self.times)):
            row = [self.times[k], *self.states[k], self.running_cost[k]]
            buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        return buf.getvalue()


def _component_name(j: int, n: int) -> str:
    return "running_cost" if j == n else f"dynamics[{j}]"


def _eval_rhs(scenario: Scenario, t: float, x: Sequence[float], theta: Sequence[float], step: int) -> tuple:
    try:
        return scenario.rhs(t, scenario.tf, x, theta)
    except ExprDomainError as err:
        # locate the failing component for the message
        n = scenario.n
        comp = None
        for j, e in enumerate(scenario.dynamics + (scenario.running_cost,)):
            try:
                compile_vector((e,))(t, scenario.tf, x, theta)
            except ExprDomainError:
                comp = j
                break
        where = _component_name(comp, n) if comp is not None else "right-hand side"
        raise IntegrationError(f"{where} at step {step}, t={t:.17g}: {err}", step, comp) from err


def derivative(scenario: Scenario, t: float, x: Sequence[float], theta: Sequence[float]) -> np.ndarray:
    """Evaluate the dynamics vector at ``(t, x, theta)``."""
    return np.array(_eval_rhs(scenario, float(t), list(map(float, x)), list(map(float, theta)), 0)[: scenario.n])


def integrate(scenario: Scenario, theta: Sequence[float], steps: int) -> Trajectory:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n = scenario.n
    theta = [float(v) for v in theta]
    t0, tf = scenario.t0, scenario.tf
    h = (tf - t0) / steps
    half = 0.5 * h
    sixth = h / 6.0

    times = np.empty(steps + 1)
    states = np.empty((steps + 1, n))
    qs = np.empty(steps + 1)

    y = list(scenario.x0) + [0.0]
    times[0] = t0
    states[0] = scenario.x0
    qs[0] = 0.0
    m = n + 1
    rng = range(m)
    for k in range(steps):
        t = t0 + k * h
        k1 = _eval_rhs(scenario, t, y, theta, k)
        y2 = [y[j] + half * k1[j] for j in rng]
        k2 = _eval_rhs(scenario, t + half, y2, theta, k)
        y3 = [y[j] + half * k2[j] for j in rng]
        k3 = _eval_rhs(scenario, t + half, y3, theta, k)
        y4 = [y[j] + h * k3[j] for j in rng]
        k4 = _eval_rhs(scenario, t + h, y4, theta, k)
        y = [y[j] + sixth * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) for j in rng]
        for j in rng:
            v = y[j]
            # the cost accumulator only has to stay finite
            limit = DIVERGENCE_LIMIT if j < n else math.inf
            if not (abs(v) <= limit):
                name = f"state x{j}" if j < n else "running cost"
                raise IntegrationError(f"{name} diverged at step {k + 1} (value {v!r})", k + 1, j)
        times[k + 1] = t0 + (k + 1) * h
        states[k + 1] = y[:n]
        qs[k + 1] = y[n]
    times[-1] = tf
    return Trajectory(times, states, qs)


@dataclass(frozen=True)
class Violation:
    index: int
    component: int
    excess: float


def check_state_bounds(traj: Trajectory, bounds: BoxSet) -> list[Violation]:
    """Every grid sample/component outside ``bounds`` with its (positive) excess."""
    out = []
    lo = np.asarray(bounds.lower)
    hi = np.asarray(bounds.upper)
    for k, x in enumerate(traj.states):
        for j in range(len(x)):
            if x[j] > hi[j]:
                out.append(Violation(k, j, float(x[j] - hi[j])))
            elif x[j] < lo[j]:
                out.append(Violation(k, j, float(lo[j] - x[j])))
    return out
