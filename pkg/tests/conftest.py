import math
from pathlib import Path

import pytest

from attain.expr import parse
from attain.model import BoxSet, ProblemSpec, Scenario, SolverOptions

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


def make_scenario(
    id="s",
    dynamics=("0",),
    x0=(0.0,),
    t0=0.0,
    tf=1.0,
    terminal="0",
    running="0",
    lower=None,
    upper=None,
    steps=None,
):
    n = len(x0)
    return Scenario(
        id=id,
        dynamics=tuple(parse(d) for d in dynamics),
        x0=x0,
        t0=t0,
        tf=tf,
        terminal_cost=parse(terminal),
        running_cost=parse(running),
        state_bounds=BoxSet(lower or (-math.inf,) * n, upper or (math.inf,) * n),
        steps=steps,
    )


def make_spec(scenarios, p=1, lower=None, upper=None, init=None, weights=None, **opts):
    return ProblemSpec(
        scenarios=tuple(scenarios),
        p=p,
        theta_bounds=BoxSet(lower or (-math.inf,) * p, upper or (math.inf,) * p),
        theta_init=init or (0.0,) * p,
        weights=weights or (1.0 / len(scenarios),) * len(scenarios),
        options=SolverOptions(**opts),
    )


def quadratics_spec(weights=(0.5, 0.5), **opts):
    """J_right = (theta0 - 1)^2, J_left = (theta0 + 1)^2 as terminal-only costs."""
    return make_spec(
        [
            make_scenario("right", terminal="(theta0 - 1)^2", steps=1),
            make_scenario("left", terminal="(theta0 + 1)^2", steps=1),
        ],
        lower=(-5.0,),
        upper=(5.0,),
        init=(0.7,),
        weights=weights,
        **opts,
    )


def decay_spec(steps=200):
    """x' = -theta0 x on [0, 2] with psi = x^2 + 0.1 theta0^2, theta in [0.1, 5]."""
    return make_spec(
        [make_scenario("decay", ("-theta0*x0",), (1.0,), 0.0, 2.0, "0", "x0^2 + 0.1*theta0^2")],
        lower=(0.1,),
        upper=(5.0,),
        init=(1.0,),
        weights=(1.0,),
        integrator_steps=steps,
    )


@pytest.fixture
def problems_dir():
    return PROBLEMS


# acceptance results, printed as one line per criterion at the end of the run
ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
