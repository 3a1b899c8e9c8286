# -*- coding: utf-8 -*-
"""
    test_controller
    ~~~~~~~~~~~~~~~

    Test the safety filter and the three controller variants.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import numpy as np
import pytest

from gridvolt import feeders
from gridvolt.controller import (ControllerConfig, Variant, barrier, cbf_qp_oracle, control, nagumo_slack, nominal_rate, rate_bounds,
                                 safe_gradient_flow_control, tasrl_control, transient_only_control)
from gridvolt.errors import InfeasibleState, InvalidAlpha, InvalidConfig
from gridvolt.network import voltage
from gridvolt.policy import init_policy
from gridvolt.steady_state import SteadyStateProblem, gradient

ORACLE_TOLERANCE = 1e-8
SLACK_TOLERANCE = 1e-12


@pytest.fixture(scope='module')
def problem():
    network = feeders.ieee13_like()
    return SteadyStateProblem.from_network(network, network.v_nom * 1.1)


@pytest.fixture(scope='module')
def config(problem):
    return ControllerConfig(policy=init_policy(problem.network))


def random_states(problem, rng, size):
    q = rng.uniform(problem.q_lo, problem.q_hi, (size, problem.network.n))
    return voltage(problem.network, q, problem.v_env), q


def test_filter_matches_oracle(problem, config):
    rng = np.random.default_rng(0)
    v, q = random_states(problem, rng, 200)
    raw = rng.normal(0., 0.5, q.shape)
    lower, upper = rate_bounds(config, q, problem.q_lo, problem.q_hi)
    closed_form = np.clip(raw, lower, upper)
    np.testing.assert_allclose(cbf_qp_oracle(config, raw, q, problem.q_lo, problem.q_hi), closed_form, rtol=0, atol=ORACLE_TOLERANCE)


@pytest.mark.parametrize('alpha', [0.1, 0.5, 1.])
def test_filter_matches_oracle_random_boxes(alpha):
    rng = np.random.default_rng(10)
    size, n = 10000, 13
    q_lo = -rng.uniform(0.05, 1., (size, n))
    q_hi = rng.uniform(0.05, 1., (size, n))
    q = rng.uniform(q_lo, q_hi)
    # states on the edges of their box
    q = np.where(rng.uniform(size=q.shape) < 0.05, q_lo, q)
    q = np.where(rng.uniform(size=q.shape) < 0.05, q_hi, q)
    raw = rng.normal(0., 0.5, q.shape)
    config = ControllerConfig(alpha=alpha, variant=Variant.SAFE_GRADIENT_FLOW)
    lower, upper = rate_bounds(config, q, q_lo, q_hi)
    filtered = cbf_qp_oracle(config, raw, q, q_lo, q_hi)
    np.testing.assert_allclose(filtered, np.clip(raw, lower, upper), rtol=0, atol=ORACLE_TOLERANCE)
    assert np.mean(filtered != raw) > 0.1


@pytest.mark.parametrize('variant', list(Variant))
def test_barrier_condition(problem, config, variant):
    config = config.replace(variant=variant)
    rng = np.random.default_rng(1)
    v, q = random_states(problem, rng, 500)
    v = v + rng.uniform(-0.2, 0.2, v.shape)
    decision = control(config, problem, v, q)
    assert np.all(nagumo_slack(config, decision.xi, q, problem.q_lo, problem.q_hi) >= -SLACK_TOLERANCE)
    q_next = q + config.h * decision.xi
    assert np.all(q_next >= problem.q_lo) and np.all(q_next <= problem.q_hi)
    assert np.all(decision.xi[:, ~problem.free] == 0)


def test_pass_through(problem, config):
    q = np.zeros(problem.network.n)
    v = voltage(problem.network, q, problem.network.v_nom)
    decision = safe_gradient_flow_control(config, problem, v, q)
    np.testing.assert_array_equal(decision.xi, -gradient(problem, q, v))
    assert not np.any(decision.clipped)


def test_clipping(problem, config):
    q = problem.q_hi * 0.99
    v = problem.network.v_nom * 0.8
    decision = safe_gradient_flow_control(config, problem, v, q)
    lower, upper = rate_bounds(config, q, problem.q_lo, problem.q_hi)
    free = problem.free
    np.testing.assert_allclose(decision.xi[free], upper[free])
    assert np.all(decision.clipped[free])


def test_variants(problem, config):
    rng = np.random.default_rng(2)
    v, q = random_states(problem, rng, 50)
    v = v + rng.uniform(-0.1, 0.1, v.shape)
    lower, upper = rate_bounds(config, q, problem.q_lo, problem.q_hi)
    combined = tasrl_control(config, problem, v, q).xi
    transient = transient_only_control(config, problem, v, q).xi
    raw = nominal_rate(config, problem, v, q)
    np.testing.assert_array_equal(combined, np.clip(raw, lower, upper))
    sgf = nominal_rate(config.replace(variant=Variant.SAFE_GRADIENT_FLOW), problem, v, q)
    np.testing.assert_allclose(raw - sgf, nominal_rate(config.replace(variant=Variant.TRANSIENT_ONLY), problem, v, q), atol=1e-14)
    assert np.all(np.abs(transient) <= np.maximum(np.abs(lower), np.abs(upper)))


def test_transient_only_in_band(problem, config):
    q = np.zeros(problem.network.n)
    v = problem.network.v_nom.copy()
    decision = transient_only_control(config, problem, v, q)
    assert np.all(decision.xi == 0)


def test_exploration_is_filtered(problem, config):
    rng = np.random.default_rng(3)
    v, q = random_states(problem, rng, 100)
    decision = control(config, problem, v, q, exploration=rng.normal(0., 10., q.shape))
    q_next = q + config.h * decision.xi
    assert np.all(q_next >= problem.q_lo) and np.all(q_next <= problem.q_hi)


def test_barrier():
    g = barrier([0.1, -0.2], [-0.5, -0.5], [0.5, 0.5])
    np.testing.assert_allclose(g, [-0.4, -0.7, -0.6, -0.3])
    assert np.all(g <= 0)


def test_infeasible_state(problem, config):
    q = problem.q_hi + 1e-6
    with pytest.raises(InfeasibleState):
        safe_gradient_flow_control(config, problem, problem.v_env, q)


def test_config_checks(problem):
    policy = init_policy(problem.network)
    with pytest.raises(InvalidAlpha):
        ControllerConfig(alpha=0., policy=policy)
    with pytest.raises(InvalidAlpha):
        ControllerConfig(alpha=2., h=1., policy=policy)
    with pytest.raises(InvalidConfig):
        ControllerConfig(h=-1., policy=policy)
    with pytest.raises(InvalidConfig):
        ControllerConfig(variant=Variant.TASRL)
    assert ControllerConfig(variant='sgf').variant is Variant.SAFE_GRADIENT_FLOW
    assert ControllerConfig(alpha=2., h=0.5, variant=Variant.SAFE_GRADIENT_FLOW).alpha == 2.
