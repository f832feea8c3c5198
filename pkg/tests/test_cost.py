import math
from dataclasses import replace

import numpy as np
import pytest

from attain.cost import (
    CostError,
    ProbeError,
    StateBoundError,
    evaluate_all,
    evaluate_cost,
    gradient,
)
from attain.io import load_problem
from attain.model import SolverOptions

from conftest import PROBLEMS, decay_spec, make_scenario, make_spec

OPTS = SolverOptions()


def test_unit_running_cost():
    c = evaluate_cost(make_scenario(tf=2.0, running="1"), (), OPTS)
    assert c.total == pytest.approx(2.0, abs=1e-9)


def test_decay_running_cost_matches_closed_form():
    sc = make_scenario(dynamics=("-x0",), x0=(1.0,), tf=1.0, running="x0^2")
    c = evaluate_cost(sc, (), replace(OPTS, integrator_steps=200))
    assert c.total == pytest.approx((1.0 - math.exp(-2.0)) / 2.0, abs=1e-6)


def test_terminal_only_cost_exact():
    sc = make_scenario(dynamics=("0",), x0=(3.0,), terminal="x0^2")
    c = evaluate_cost(sc, (), OPTS)
    assert c.total == 9.0
    assert c.running_part == 0.0


def test_terminal_cost_sees_tf_and_theta():
    sc = make_scenario(dynamics=("0",), x0=(2.0,), tf=4.0, terminal="tf*x0 + theta0")
    assert evaluate_cost(sc, (0.5,), OPTS).total == 8.5


class TestStateBoundModes:
    ramp = make_scenario(dynamics=("1",), x0=(0.0,), tf=2.0, upper=(1.0,), lower=(-5.0,))
    opts = replace(OPTS, integrator_steps=4, penalty_coefficient=10.0)

    def test_monitor_ignores(self):
        c = evaluate_cost(self.ramp, (), self.opts)
        assert c.bound_penalty == 0.0

    def test_penalize_sums_squared_excess(self):
        c = evaluate_cost(self.ramp, (), replace(self.opts, state_bound_mode="penalize"))
        # samples t = 1.5, 2.0 exceed by 0.5 and 1.0
        assert c.bound_penalty == pytest.approx(10.0 * (0.25 + 1.0), rel=1e-14)
        assert c.total == c.terminal_part + c.running_part + c.bound_penalty

    def test_reject_raises(self):
        with pytest.raises(StateBoundError, match="x0 at grid index 3"):
            evaluate_cost(self.ramp, (), replace(self.opts, state_bound_mode="reject"))


def test_decomposition_identity():
    sc = make_scenario(dynamics=("x1", "-theta0*x0"), x0=(1.0, 0.0), tf=3.0, terminal="x0^2 + 0.5", running="x1^2")
    c = evaluate_cost(sc, (2.0,), OPTS)
    assert abs(c.total - (c.terminal_part + c.running_part + c.bound_penalty)) <= 1e-12


def test_divergence_becomes_cost_error():
    sc = make_scenario("boom", dynamics=("x0^2",), x0=(1.0,), tf=2.0)
    with pytest.raises(CostError, match="boom") as info:
        evaluate_cost(sc, (), OPTS)
    assert info.value.scenario == "boom"


class TestEvaluateAll:
    def test_single(self):
        sc = make_scenario(dynamics=("-x0",), x0=(1.0,), running="x0")
        spec = make_spec([sc])
        assert evaluate_all(spec, (0.0,)) == [evaluate_cost(sc, (0.0,), spec.options)]

    def test_duplicate_scenarios_equal(self):
        sc = make_scenario(dynamics=("-theta0*x0",), x0=(1.0,), running="x0^2")
        a, b = evaluate_all(make_spec([sc, sc.with_(id="copy")]), (0.7,))
        assert a == b

    def test_order_and_horizons(self):
        spec = make_spec([make_scenario("one", tf=1.0, running="1"), make_scenario("two", tf=2.0, running="1")])
        totals = [c.total for c in evaluate_all(spec, (0.0,))]
        assert totals == pytest.approx([1.0, 2.0], abs=1e-12)

    def test_concurrent_matches_sequential(self):
        scs = [make_scenario(f"s{k}", ("-theta0*x0",), (1.0 + k,), running="x0^2") for k in range(4)]
        spec = make_spec(scs)
        seq = evaluate_all(spec, (0.3,))
        par = evaluate_all(spec, (0.3,), replace(spec.options, jobs=3))
        assert seq == par

    def test_errors_aggregated_with_ids(self):
        spec = make_spec(
            [
                make_scenario("ok", running="1"),
                make_scenario("bad", dynamics=("x0^2",), x0=(1.0,), tf=3.0),
            ]
        )
        with pytest.raises(CostError, match="scenario 'bad'"):
            evaluate_all(spec, (0.0,))


class TestGradient:
    def test_quadratic(self):
        assert gradient(lambda z: float(z @ z), (1.0, 2.0)) == pytest.approx([2.0, 4.0], abs=1e-7)

    def test_constant(self):
        assert np.all(np.abs(gradient(lambda z: 3.0, (0.2, -4.0, 9.0))) <= 1e-9)

    def test_sine(self):
        assert gradient(lambda z: math.sin(z[0]), (0.0,)) == pytest.approx([1.0], abs=1e-9)

    def test_step_policy(self):
        # the step grows with |theta|: central difference of a cubic has error h^2
        g = gradient(lambda z: z[0] ** 3, (1000.0,), fd_step_scale=1e-4)
        h = 1e-4 * 1001.0
        assert g[0] == pytest.approx(3e6 + h**2, rel=1e-9)

    def test_probe_failure_names_component(self):
        def f(z):
            if z[1] < 0.0:
                raise ValueError("negative")
            return z[0]

        with pytest.raises(ProbeError) as info:
            gradient(f, (1.0, 0.0))
        assert info.value.component == 1
        assert info.value.direction == "backward"


def _shipped():
    out = [decay_spec()]
    for name in ("two_scenario.json", "decay_tuning.json", "conflicting_quadratics.json"):
        out.append(load_problem((PROBLEMS / name).read_text()))
    return out


@pytest.mark.parametrize("spec", _shipped(), ids=lambda s: "+".join(s.ids))
def test_fd_gradient_agrees_with_forward_difference(spec):
    theta = np.array(spec.theta_init)
    h = spec.options.fd_step_scale
    for sc in spec.scenarios:
        def f(th, sc=sc):
            return evaluate_cost(sc, th, spec.options).total

        central = gradient(f, theta, h)
        steps = h / 10 * (1 + np.abs(theta))
        f0 = f(theta)
        forward = np.array([(f(theta + steps[j] * np.eye(len(theta))[j]) - f0) / steps[j] for j in range(len(theta))])
        scale = np.maximum(np.abs(central), 1e-3)
        assert np.all(np.abs(central - forward) / scale <= 1e-4), (central, forward)


@pytest.mark.parametrize("spec", _shipped(), ids=lambda s: "+".join(s.ids))
def test_refinement_invariance(spec):
    fine = replace(spec.options, integrator_steps=2 * spec.options.integrator_steps)
    for sc in spec.scenarios:
        sc_fine = sc if sc.steps is None else sc.with_(steps=2 * sc.steps)
        a = evaluate_cost(sc, spec.theta_init, spec.options).total
        b = evaluate_cost(sc_fine, spec.theta_init, fine).total
        assert abs(a - b) < 1e-6
