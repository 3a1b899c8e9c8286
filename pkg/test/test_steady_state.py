# -*- coding: utf-8 -*-
"""
    test_steady_state
    ~~~~~~~~~~~~~~~~~

    Test the steady-state problem, the projected-gradient solver and the active-set oracle.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import numpy as np
import pytest

from gridvolt import feeders
from gridvolt.errors import DimensionMismatch, InvalidConfig, MaxIterationsExceeded, ProblemTooLarge
from gridvolt.network import Bus, Line, build_network, voltage
from gridvolt.simulation import generate_scenarios
from gridvolt.steady_state import (SteadyStateProblem, gradient, kkt_residual, nodal_objective, objective, projected_gradient_solve,
                                   qp_oracle, step_size_bound)

ORACLE_TOLERANCE = 1e-8
GRADIENT_TOLERANCE = 1e-6
FD_STEP = 1e-6


def one_bus(v_env=1.2):
    """C_q = 1, X = 1, box [-0.45, 0.45]."""
    network = build_network([Bus(0), Bus(1, q_min=-0.45, q_max=0.45, eta=1., s_bar=1.)], [Line(0, 1, 0.25, 0.5)])
    return SteadyStateProblem.from_network(network, [v_env])


def ieee13_problem(v_env_scale=1.1):
    network = feeders.ieee13_like()
    return SteadyStateProblem.from_network(network, network.v_nom * v_env_scale)


def test_one_bus_optimum():
    problem = one_bus()
    report = qp_oracle(problem)
    np.testing.assert_allclose(report.q_star, [-0.1], atol=1e-12)
    assert report.objective == pytest.approx(-0.01)
    np.testing.assert_allclose(report.v_star, [1.1], atol=1e-12)
    assert report.residual < 1e-12


def test_one_bus_saturated():
    problem = one_bus(v_env=2.)
    report = qp_oracle(problem)
    np.testing.assert_allclose(report.q_star, [-0.45])
    assert projected_gradient_solve(problem).q_star[0] == -0.45


def test_gradient_finite_differences():
    problem = ieee13_problem()
    network = problem.network
    rng = np.random.default_rng(1)
    for _ in range(100):
        q = rng.uniform(-0.45, 0.45, network.n)
        analytic = gradient(problem, q, voltage(network, q, problem.v_env))
        numeric = np.empty(network.n)
        for k in range(network.n):
            step = np.zeros(network.n)
            step[k] = FD_STEP
            numeric[k] = (objective(problem, q + step) - objective(problem, q - step)) / (2 * FD_STEP)
        np.testing.assert_allclose(analytic, numeric, rtol=0, atol=GRADIENT_TOLERANCE)


def test_nodal_decomposition():
    problem = ieee13_problem()
    q = np.random.default_rng(2).uniform(-0.45, 0.45, (20, problem.network.n))
    np.testing.assert_allclose(nodal_objective(problem, q), objective(problem, q), rtol=0, atol=1e-12)


def test_pinned_buses():
    problem = ieee13_problem()
    assert np.array_equal(problem.free, problem.network.controlled)
    report = projected_gradient_solve(problem)
    assert np.all(report.q_star[~problem.free] == 0)


@pytest.mark.parametrize('name', sorted(feeders.FEEDERS))
def test_projected_gradient(name):
    network = feeders.FEEDERS[name]()
    problem = SteadyStateProblem.from_network(network, network.v_nom * 1.1)
    report = projected_gradient_solve(problem, record=True)
    assert report.converged
    assert report.residual < 1e-8
    assert report.iterations <= 100000
    assert np.all(np.diff(report.history) <= 1e-15)
    assert np.all(report.q_star >= problem.q_lo) and np.all(report.q_star <= problem.q_hi)


def test_projected_gradient_matches_oracle():
    network = feeders.ieee13_like()
    problem = SteadyStateProblem.from_network(network, network.v_nom)
    for kind in ('high', 'low'):
        for scenario in generate_scenarios(network, kind, count=20, seed=5):
            scenario_problem = problem.with_env(scenario.v_env)
            expected = qp_oracle(scenario_problem)
            actual = projected_gradient_solve(scenario_problem)
            assert actual.objective == pytest.approx(expected.objective, abs=ORACLE_TOLERANCE)
            np.testing.assert_allclose(actual.q_star, expected.q_star, rtol=0, atol=1e-6)
            assert kkt_residual(scenario_problem, expected.q_star) < 1e-10


def test_kkt_residual():
    problem = one_bus()
    assert kkt_residual(problem, [-0.1]) < 1e-15
    assert kkt_residual(problem, [0.]) == pytest.approx(0.2)


def test_step_size():
    problem = one_bus()
    assert step_size_bound(problem) == pytest.approx(1.)
    with pytest.raises(InvalidConfig):
        projected_gradient_solve(problem, gamma=1.)
    with pytest.raises(InvalidConfig):
        projected_gradient_solve(problem, gamma=-0.1)


def test_max_iterations():
    problem = ieee13_problem()
    with pytest.raises(MaxIterationsExceeded) as error:
        projected_gradient_solve(problem, max_iter=2)
    assert not error.value.report.converged
    report = projected_gradient_solve(problem, max_iter=2, strict=False)
    assert not report.converged
    assert report.iterations == 2


def test_oracle_too_large():
    network = feeders.ieee123_like()
    with pytest.raises(ProblemTooLarge):
        qp_oracle(SteadyStateProblem.from_network(network, network.v_nom))


def chain_problem(n, controlled):
    buses = [Bus(0)] + [Bus.from_capacity(k, 1.) if k in controlled else Bus(k) for k in range(1, n + 1)]
    network = build_network(buses, [Line(k - 1, k, 0.01, 0.02) for k in range(1, n + 1)])
    return SteadyStateProblem.from_network(network, network.v_nom * 1.1)


def test_oracle_twenty_buses():
    problem = chain_problem(20, {3, 8, 14, 20})
    expected = qp_oracle(problem)
    assert expected.iterations == 3 ** 4
    actual = projected_gradient_solve(problem)
    assert actual.objective == pytest.approx(expected.objective, abs=ORACLE_TOLERANCE)
    np.testing.assert_allclose(actual.q_star, expected.q_star, rtol=0, atol=1e-6)
    with pytest.raises(ProblemTooLarge, match='at most 12'):
        qp_oracle(chain_problem(20, set(range(1, 14))))


def test_invalid_problem():
    network = feeders.ieee13_like()
    with pytest.raises(DimensionMismatch):
        SteadyStateProblem.from_network(network, np.ones(3))
    problem = SteadyStateProblem.from_network(network, network.v_nom)
    with pytest.raises(InvalidConfig):
        SteadyStateProblem(network, -problem.C_q, problem.delta_v_tilde, problem.q_lo, problem.q_hi)
