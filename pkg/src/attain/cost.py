"""Simulation-embedded Bolza costs and finite-difference derivatives."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from attain.dynamics import IntegrationError, check_state_bounds, integrate
from attain.expr import ExprDomainError
from attain.model import ProblemSpec, Scenario, SolverOptions

DEFAULT_FD_STEP = float(np.finfo(float).eps ** (1.0 / 3.0))


class CostError(RuntimeError):
    """A cost could not be evaluated; ``scenario`` names the failing scenario."""

    def __init__(self, message: str, scenario: str | None = None):
        super().__init__(f"scenario '{scenario}': {message}" if scenario is not None else message)
        self.scenario = scenario


class StateBoundError(CostError):
    pass


class ProbeError(RuntimeError):
    def __init__(self, component: int, direction: str, cause: Exception):
        super().__init__(f"finite-difference probe failed for component {component} ({direction}): {cause}")
        self.component = component
        self.direction = direction


@dataclass(frozen=True)
class CostValue:
    terminal_part: float
    running_part: float
    bound_penalty: float = 0.0

    @property
    def total(self) -> float:
        return self.terminal_part + self.running_part + self.bound_penalty


def _steps(scenario: Scenario, opts: SolverOptions) -> int:
    return scenario.steps if scenario.steps is not None else opts.integrator_steps


def evaluate_cost(scenario: Scenario, theta: Sequence[float], opts: SolverOptions) -> CostValue:
    """Simulate ``scenario`` at ``theta`` and return its cost broken into parts.

    In ``penalize`` mode the bound term is ``penalty_coefficient`` times the
    sum of squared grid-point excesses; in ``reject`` mode any excess raises
    :class:`StateBoundError`.
    """
    theta = [float(v) for v in theta]
    try:
        traj = integrate(scenario, theta, _steps(scenario, opts))
        xf = [float(v) for v in traj.final_state]
        terminal = scenario.terminal(0.0, scenario.tf, xf, theta)[0]
    except (IntegrationError, ExprDomainError) as err:
        raise CostError(str(err), scenario.id) from err

    penalty = 0.0
    if opts.state_bound_mode != "monitor":
        violations = check_state_bounds(traj, scenario.state_bounds)
        if violations and opts.state_bound_mode == "reject":
            v = violations[0]
            raise StateBoundError(
                f"state bound violated: x{v.component} at grid index {v.index} exceeds by {v.excess:.6g}"
                f" ({len(violations)} violation(s) in total)",
                scenario.id,
            )
        if opts.state_bound_mode == "penalize":
            penalty = opts.penalty_coefficient * sum(v.excess**2 for v in violations)
    return CostValue(float(terminal), float(traj.running_cost[-1]), float(penalty))


def evaluate_all(spec: ProblemSpec, theta: Sequence[float], opts: SolverOptions | None = None) -> list[CostValue]:
    opts = opts or spec.options
    errors: list[CostError] = []

    def one(s: Scenario):
        try:
            return evaluate_cost(s, theta, opts)
        except CostError as err:
            errors.append(err)
            return None

    if opts.jobs > 1 and spec.N > 1:
        with ThreadPoolExecutor(max_workers=opts.jobs) as pool:
            results = list(pool.map(one, spec.scenarios))
    else:
        results = [one(s) for s in spec.scenarios]
    if errors:
        errors.sort(key=lambda e: spec.ids.index(e.scenario) if e.scenario in spec.ids else -1)
        raise CostError("; ".join(str(e) for e in errors))
    return results


def fd_steps(theta: np.ndarray, fd_step_scale: float = DEFAULT_FD_STEP) -> np.ndarray:
    return fd_step_scale * (1.0 + np.abs(theta))


def gradient(f: Callable[[np.ndarray], float], theta: Sequence[float], fd_step_scale: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference gradient with per-component step ``scale * (1 + |theta_j|)``."""
    theta = np.asarray(theta, dtype=float)
    return jacobian(lambda z: np.array([f(z)]), theta, fd_step_scale)[0]


def jacobian(
    f: Callable[[np.ndarray], np.ndarray], theta: Sequence[float], fd_step_scale: float = DEFAULT_FD_STEP
) -> np.ndarray:
    """Central-difference Jacobian of a vector function, shape ``(len(f), len(theta))``."""
    theta = np.asarray(theta, dtype=float)
    h = fd_steps(theta, fd_step_scale)
    cols = []
    for j in range(theta.size):
        probes = []
        for sign, direction in ((1.0, "forward"), (-1.0, "backward")):
            z = theta.copy()
            z[j] += sign * h[j]
            try:
                probes.append(np.atleast_1d(np.asarray(f(z), dtype=float)))
            except Exception as err:  # noqa: BLE001 - re-raised with probe context
                raise ProbeError(j, direction, err) from err
        # divide by the realised step, which may differ from h[j] by rounding
        step = (theta[j] + h[j]) - (theta[j] - h[j])
        cols.append((probes[0] - probes[1]) / step)
    if not cols:
        return np.zeros((np.atleast_1d(f(theta)).size, 0))
    return np.column_stack(cols)
