# -*- coding: utf-8 -*-
"""
    test_policy
    ~~~~~~~~~~~

    Test the structure of the transient policy: zero on the band, non-increasing, bounded,
    for any value of its unconstrained parameters.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import numpy as np
import pytest

from gridvolt import feeders
from gridvolt.errors import DimensionMismatch, InvariantViolation
from gridvolt.network import Bus, Line, build_network
from gridvolt.policy import (HIGH, LOW, MonotoneBranchParams, PolicyParams, branch_weights, check_derived, init_policy, policy_eval,
                             policy_eval_vector, policy_gradient, stacked_relu)

ALPHA = 0.5
N_DRAWS = 100
TOLERANCE = 1e-12
FD_STEP = 1e-6
FD_TOLERANCE = 1e-6


def random_policy(network, rng, n_units=4, spread=1.5):
    m = len(network.controlled_ids)
    return PolicyParams(network.controlled_ids, rng.normal(0., spread, (m, n_units)), rng.normal(0., spread, (m, n_units - 1)),
                        rng.normal(0., spread, (m, n_units)), rng.normal(0., spread, (m, n_units - 1)),
                        c=rng.uniform(0., 0.99), epsilon=rng.uniform(0.01, 0.5))


def margin_box(policy, network, rng, size):
    """Uniform q in [q_min (1 - epsilon), q_max (1 - epsilon)]."""
    margin = 1. - policy.epsilon
    return rng.uniform(network.q_min * margin, network.q_max * margin, (size, network.n))


@pytest.fixture(scope='module')
def network():
    return feeders.ieee13_like()


def test_branch_weights():
    w, b = branch_weights(MonotoneBranchParams(np.log([1., 3., 2.]), np.log([0.1, 0.2])), HIGH)
    np.testing.assert_allclose(w, [-1., -2., 1.])
    np.testing.assert_allclose(b, [0., -0.1, -0.3])
    w, b = branch_weights(MonotoneBranchParams(np.zeros(2), np.zeros(1)), LOW)
    np.testing.assert_allclose(w, [1., 0.])
    np.testing.assert_allclose(b, [0., -1.])


def test_stacked_relu():
    w, b = np.array([-1., -2., 1.]), np.array([0., -0.1, -0.3])
    assert stacked_relu(-0.2, w, b, HIGH) == 0.
    assert stacked_relu(0.05, w, b, HIGH) == pytest.approx(-0.05)
    assert stacked_relu(0.2, w, b, HIGH) == pytest.approx(-0.2 - 2 * 0.1)
    assert stacked_relu(0.4, w, b, HIGH) == pytest.approx(-0.4 - 2 * 0.3 + 0.1)


def test_init_policy(network):
    policy = init_policy(network)
    assert policy.bus_ids == tuple(network.controlled_ids)
    assert policy.width == 4 * policy.d - 2
    assert np.all(policy.to_matrix() == 0)


def test_deadband(network):
    rng = np.random.default_rng(0)
    for _ in range(N_DRAWS):
        policy = random_policy(network, rng)
        v = rng.uniform(network.v_lo, network.v_hi, (50, network.n))
        q = rng.uniform(network.q_min, network.q_max, (50, network.n))
        assert np.all(policy_eval_vector(policy, network, ALPHA, v, q) == 0)


def test_monotone(network):
    rng = np.random.default_rng(1)
    grid = np.linspace(0.7, 1.3, 1000)
    for _ in range(N_DRAWS):
        policy = random_policy(network, rng)
        q = margin_box(policy, network, rng, 1)[0]
        v = np.tile(network.v_nom, (len(grid), 1))
        v[:, network.controlled] = grid[:, np.newaxis]
        pi = policy_eval_vector(policy, network, ALPHA, v, np.tile(q, (len(grid), 1)))
        assert np.all(np.diff(pi, axis=0) <= TOLERANCE)
        above = grid > network.v_hi[0]
        below = grid < network.v_lo[0]
        assert np.all(pi[above][:, network.controlled] <= 0)
        assert np.all(pi[below][:, network.controlled] >= 0)


def test_bounds(network):
    rng = np.random.default_rng(2)
    for _ in range(N_DRAWS):
        policy = random_policy(network, rng)
        q = margin_box(policy, network, rng, 100)
        v = rng.uniform(0.7, 1.3, q.shape)
        pi = policy_eval_vector(policy, network, ALPHA, v, q)
        margin = 1. - policy.epsilon
        lower = policy.c * ALPHA * (network.q_min * margin - q)
        upper = policy.c * ALPHA * (network.q_max * margin - q)
        controlled = network.controlled
        assert np.all(pi[:, controlled] >= lower[:, controlled] - TOLERANCE)
        assert np.all(pi[:, controlled] <= upper[:, controlled] + TOLERANCE)
        assert np.all(pi[:, ~controlled] == 0)


def test_scalar_and_vector_agree(network):
    rng = np.random.default_rng(3)
    policy = random_policy(network, rng)
    v = rng.uniform(0.85, 1.15, network.n)
    q = margin_box(policy, network, rng, 1)[0]
    pi = policy_eval_vector(policy, network, ALPHA, v, q)
    for bus in network.buses[1:]:
        k = network.index(bus.id)
        assert policy_eval(policy, bus, ALPHA, v[k], q[k]) == pytest.approx(pi[k], abs=1e-15)


def test_policy_gradient(network):
    rng = np.random.default_rng(4)
    policy = random_policy(network, rng, spread=0.5)
    v = rng.choice([0.88, 0.9, 1.1, 1.12], (5, network.n))
    q = margin_box(policy, network, rng, 5)
    analytic = policy_gradient(policy, network, ALPHA, v, q)
    assert analytic.shape == (5, policy.m, policy.width)
    theta = policy.to_matrix()
    positions = [network.index(bus_id) for bus_id in policy.bus_ids]
    for k in range(policy.m):
        for j in range(policy.width):
            step = np.zeros_like(theta)
            step[k, j] = FD_STEP
            plus = policy_eval_vector(policy.from_matrix(theta + step), network, ALPHA, v, q)[:, positions[k]]
            minus = policy_eval_vector(policy.from_matrix(theta - step), network, ALPHA, v, q)[:, positions[k]]
            np.testing.assert_allclose(analytic[:, k, j], (plus - minus) / (2 * FD_STEP), rtol=0, atol=FD_TOLERANCE)


def test_matrix_layout(network):
    policy = random_policy(network, np.random.default_rng(5))
    assert policy.from_matrix(policy.to_matrix()).equals(policy)
    with pytest.raises(DimensionMismatch):
        policy.from_matrix(np.zeros((1, 1)))


def test_structure_checks(network):
    m = len(network.controlled_ids)
    with pytest.raises(InvariantViolation):
        PolicyParams(network.controlled_ids, np.zeros((m, 2)), np.zeros((m, 1)), np.zeros((m, 2)), np.zeros((m, 1)), c=1.)
    with pytest.raises(InvariantViolation):
        PolicyParams(network.controlled_ids, np.zeros((m, 2)), np.zeros((m, 1)), np.zeros((m, 2)), np.zeros((m, 1)), epsilon=0.)
    with pytest.raises(InvariantViolation):
        PolicyParams(network.controlled_ids, np.zeros((m, 2)), np.zeros((m, 2)), np.zeros((m, 2)), np.zeros((m, 1)))
    with pytest.raises(InvariantViolation):
        PolicyParams(network.controlled_ids, np.full((m, 2), np.nan), np.zeros((m, 1)), np.zeros((m, 2)), np.zeros((m, 1)))


def test_derived_checks(network):
    policy = random_policy(network, np.random.default_rng(6))
    w, b = policy.weights(HIGH)
    check_derived(policy, HIGH, w, b)
    shifted = b.copy()
    shifted[0, 0] = 0.1
    with pytest.raises(InvariantViolation):
        check_derived(policy, HIGH, w, shifted)
    with pytest.raises(InvariantViolation):
        check_derived(policy, HIGH, -w, b)
    with pytest.raises(InvariantViolation):
        check_derived(policy, LOW, w, b)


def test_network_check(network):
    policy = init_policy(network)
    policy.check_network(network)
    other = build_network([Bus(0), Bus.from_capacity(1, 1.)], [Line(0, 1, 0.1, 0.1)])
    with pytest.raises(InvariantViolation, match='buses'):
        policy.check_network(other)


def test_uncontrolled_bus(network):
    policy = init_policy(network)
    bus = network.bus(1)
    assert not bus.controllable
    assert policy_eval(policy, bus, ALPHA, 1.3, 0.) == 0.
