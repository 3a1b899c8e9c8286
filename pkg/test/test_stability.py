# -*- coding: utf-8 -*-
"""
    test_stability
    ~~~~~~~~~~~~~~

    Test the stability certificate: slope matrix, slope condition, descent inequality and
    decrease of F along trajectories, including a policy built to break it.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import logging

import numpy as np
import pytest

from gridvolt import feeders, stability
from gridvolt.controller import ControllerConfig, Variant
from gridvolt.errors import DegenerateReference, SingularX
from gridvolt.network import Bus, Line, build_network, voltage
from gridvolt.policy import PolicyParams, init_policy
from gridvolt.simulation import Scenario, generate_scenarios, run_batch, run_episode
from gridvolt.stability import (certify, check_lemma1, check_theorem_condition, equilibrium_optimality, lyapunov_monitor,
                                optimal_reference, policy_slope_matrix)
from gridvolt.steady_state import SteadyStateProblem, qp_oracle

LEMMA_STATES = 10000


def one_bus(eta=1., x=0.5, v_env=1.):
    network = build_network([Bus(0), Bus(1, q_min=-1., q_max=1., eta=eta, s_bar=1.)], [Line(0, 1, 0.1, x)])
    return SteadyStateProblem.from_network(network, [v_env])


def steep_policy():
    """A single unit of slope e^5 above the band, none below."""
    return PolicyParams([1], [[5.]], np.zeros((1, 0)), [[0.]], np.zeros((1, 0)), c=0.99, epsilon=0.1)


@pytest.fixture(scope='module')
def problem():
    network = feeders.ieee13_like()
    return SteadyStateProblem.from_network(network, network.v_nom)


def test_theorem_condition():
    problem = one_bus()
    holds, margin = check_theorem_condition(problem, np.diag([1.]))
    assert holds
    assert margin == pytest.approx(0., abs=1e-12)
    holds, margin = check_theorem_condition(problem, [1.5])
    assert not holds
    assert margin == pytest.approx(-1.)


def test_singular_x():
    buses = [Bus(0), Bus.from_capacity(1, 1.), Bus.from_capacity(2, 1.)]
    network = build_network(buses, [Line(0, 1, 0.1, 1.), Line(1, 2, 1e-14, 1e-14)])
    with pytest.raises(SingularX):
        check_theorem_condition(SteadyStateProblem.from_network(network, network.v_nom), [0., 0.])


def test_slope_matrix(monkeypatch):
    problem = one_bus()
    network = problem.network
    policy = steep_policy()
    K = policy_slope_matrix(policy, network, 0.5, [1.], [1.], [0.])
    np.testing.assert_array_equal(K, [[0.]])
    K = policy_slope_matrix(policy, network, 0.5, [1.02], [1.], [0.])
    np.testing.assert_array_equal(K, [[0.]])
    assert np.all(np.diag(policy_slope_matrix(policy, network, 0.5, [1.2], [1.], [0.])) > 0)
    with pytest.raises(DegenerateReference):
        policy_slope_matrix(policy, network, 0.5, [1.2], [1.1], [0.])

    monkeypatch.setattr(stability, 'policy_eval_vector', lambda *args: np.array([-0.2]))
    K = policy_slope_matrix(policy, network, 0.5, [1.15], [1.], [0.])
    np.testing.assert_allclose(K, [[4. / 3.]])


def test_lemma_holds(problem):
    network = problem.network
    rng = np.random.default_rng(0)
    m = len(network.controlled_ids)
    for _ in range(10):
        policy = PolicyParams(network.controlled_ids, rng.normal(0., 2., (m, 4)), rng.normal(0., 2., (m, 3)),
                              rng.normal(0., 2., (m, 4)), rng.normal(0., 2., (m, 3)), c=rng.uniform(0., 0.99))
        v_env = network.v_nom * (1. + rng.uniform(-0.15, 0.15, (LEMMA_STATES // 10, network.n)))
        q = rng.uniform(problem.q_lo, problem.q_hi, v_env.shape)
        lhs = check_lemma1(problem, policy, voltage(network, q, v_env), q)
        assert np.all(lhs >= -1e-12)


def test_lyapunov_decrease(problem):
    network = problem.network
    config = ControllerConfig(alpha=0.5, h=0.01, variant=Variant.TASRL, policy=init_policy(network))
    for scenario in generate_scenarios(network, 'high', count=5, seed=1) + generate_scenarios(network, 'low', count=5, seed=1):
        trajectory, _ = run_episode(None, config, problem, network, scenario)
        violations, _ = lyapunov_monitor(trajectory, problem.with_env(scenario.v_env))
        assert violations == 0


def test_lyapunov_violation():
    problem = one_bus(eta=4., x=0.2, v_env=1.15)
    config = ControllerConfig(alpha=0.5, h=0.01, variant=Variant.TASRL, policy=steep_policy())
    trajectory, _ = run_episode(None, config, problem, problem.network, Scenario([1.15], horizon=100))
    violations, increase = lyapunov_monitor(trajectory, problem)
    assert violations > 0
    assert increase > 1e-4


def test_optimal_reference(problem):
    scenario_problem = problem.with_env(problem.network.v_nom * 1.05)
    report = optimal_reference(scenario_problem)
    np.testing.assert_allclose(report.q_star, qp_oracle(scenario_problem).q_star)


def test_equilibrium_optimality(problem):
    network = problem.network
    config = ControllerConfig(variant=Variant.TASRL, policy=init_policy(network))
    scenario_problem = problem.with_env(network.v_nom * 1.03)
    report = qp_oracle(scenario_problem)
    assert equilibrium_optimality(config, scenario_problem, report.v_star, report.q_star) < 1e-10
    q = np.zeros(network.n)
    assert equilibrium_optimality(config, scenario_problem, voltage(network, q, scenario_problem.v_env), q) is None


def test_certify(problem):
    network = problem.network
    config = ControllerConfig(variant=Variant.TASRL, policy=init_policy(network))
    scenarios = generate_scenarios(network, 'high', count=3, seed=2) + generate_scenarios(network, 'low', count=3, seed=2)
    report = certify(config, problem, scenarios, n_samples=200, seed=3)
    assert 0 < report.n_samples <= 200
    assert report.lemma_violations == 0
    assert report.lyapunov_violations == 0
    assert report.n_trajectories == 6
    again = certify(config, problem, scenarios, n_samples=200, seed=3)
    assert again.worst_margin == report.worst_margin


def test_certify_short_of_samples(problem, monkeypatch, caplog):
    network = problem.network
    config = ControllerConfig(variant=Variant.TASRL, policy=init_policy(network))
    periods = []

    def counted_run_batch(*args, **kwargs):
        periods.append(args[1].h)
        return run_batch(*args, **kwargs)

    def degenerate(*args):
        raise DegenerateReference('the optimal voltage leaves the band')

    monkeypatch.setattr(stability, 'run_batch', counted_run_batch)
    monkeypatch.setattr(stability, 'policy_slope_matrix', degenerate)
    with caplog.at_level(logging.WARNING, logger='gridvolt.stability'):
        report = certify(config, problem, generate_scenarios(network, 'high', count=2, seed=4, horizon=20), n_samples=4)
    assert report.n_samples == 0
    assert report.n_trajectories == 2
    # one simulation for the sampled states, one for the decrease monitor
    assert periods == [config.h, 0.01]
    assert 'Only 0 of 4 sampled states' in caplog.text


def test_certify_rejects_steep_policy():
    problem = one_bus(eta=4., x=0.2)
    config = ControllerConfig(alpha=0.5, h=1., variant=Variant.TASRL, policy=steep_policy())
    report = certify(config, problem, [Scenario([1.15], horizon=100)], n_samples=50)
    assert not report.passed
    assert report.lyapunov_violations > 0
