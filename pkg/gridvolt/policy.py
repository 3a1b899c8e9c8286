# -*- coding: utf-8 -*-
"""
    gridvolt.policy
    ~~~~~~~~~~~~~~~

    The module :mod:`gridvolt.policy` defines the decentralized transient policy of each
    controlled bus:

        pi_i(v_i, q_i) = c alpha (q_i - q'_lo) tanh(xi+(v_i - v_hi)) + c alpha (q'_hi - q_i) tanh(xi-(v_i - v_lo)),

    where xi+ and xi- are stacked-ReLU branches. A branch is parameterized by unconstrained
    reals (u, beta): the partial sums of its weights are -exp(u) (high branch) or +exp(u)
    (low branch) and its biases decrease from 0 by exp(beta). Every parameter value thus
    gives a policy that is zero on the band [v_lo, v_hi], non-increasing in v_i and bounded.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

from dataclasses import dataclass

import numpy as np

from gridvolt import parameters
from gridvolt.errors import DimensionMismatch, InvariantViolation

HIGH = '+'  #: branch acting above the band
LOW = '-'   #: branch acting below the band

#: tolerance of the consistency checks of derived weights and biases
STRUCTURE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MonotoneBranchParams:
    """Unconstrained parameters of one stacked-ReLU branch of d units."""
    u: np.ndarray     #: (d,) logarithms of the absolute partial sums of the weights
    beta: np.ndarray  #: (d - 1,) logarithms of the bias decrements

    @property
    def d(self):
        return len(self.u)


def _weights(u, beta, sign):
    """Weights and biases of branches stored along the last axis of `u` and `beta`."""
    partial_sums = np.exp(u) * (-1. if sign == HIGH else 1.)
    w = np.diff(partial_sums, axis=-1, prepend=0.)
    decrements = np.exp(beta)
    b = -np.concatenate([np.zeros(decrements.shape[:-1] + (1,)), np.cumsum(decrements, axis=-1)], axis=-1)
    return w, b


def branch_weights(params, sign):
    """
    Weights and biases of a branch: w_l = S_l - S_(l-1) with S_l = -exp(u_l) for the high branch
    (+exp(u_l) for the low branch), b_1 = 0 and b_l = b_(l-1) - exp(beta_(l-1)).

    :param MonotoneBranchParams params: the branch parameters
    :param str sign: :data:`HIGH` or :data:`LOW`

    :return: w and b
    :rtype: (numpy.ndarray, numpy.ndarray)
    """
    return _weights(np.asarray(params.u, dtype=float), np.asarray(params.beta, dtype=float), sign)


def stacked_relu(v_dev, w, b, sign):
    """
    w' ReLU(1 v_dev + b) for the high branch, w' ReLU(-1 v_dev + b) for the low branch.

    :param float v_dev: v_i - v_hi (high branch) or v_i - v_lo (low branch) (p.u.)
    :param numpy.ndarray w: weights
    :param numpy.ndarray b: biases, b_1 = 0 and non-increasing

    :return: the branch output
    :rtype: float or numpy.ndarray
    """
    v_dev = np.asarray(v_dev, dtype=float)[..., np.newaxis]
    if sign == LOW:
        v_dev = -v_dev
    return np.sum(w * np.maximum(v_dev + b, 0.), axis=-1)


class PolicyParams(object):
    """
    Parameters of the transient policies of a set of buses. The branch parameters are
    stored as arrays with one row per bus, in the order of :attr:`bus_ids`.

    :param list bus_ids: the controlled buses
    :param numpy.ndarray u_high: (m, d)
    :param numpy.ndarray beta_high: (m, d - 1)
    :param numpy.ndarray u_low: (m, d)
    :param numpy.ndarray beta_low: (m, d - 1)
    :param float c: output-bound fraction, in [0, 1)
    :param float epsilon: capacity-margin fraction, in (0, 1)
    """

    ARRAYS = ('u_high', 'beta_high', 'u_low', 'beta_low')

    def __init__(self, bus_ids, u_high, beta_high, u_low, beta_low, c=parameters.C_FRACTION, epsilon=parameters.EPSILON):
        self.bus_ids = tuple(int(bus_id) for bus_id in bus_ids)
        self.u_high = np.array(u_high, dtype=float, ndmin=2)
        self.beta_high = np.array(beta_high, dtype=float, ndmin=2)
        self.u_low = np.array(u_low, dtype=float, ndmin=2)
        self.beta_low = np.array(beta_low, dtype=float, ndmin=2)
        self.c = float(c)
        self.epsilon = float(epsilon)
        self._positions = {bus_id: k for k, bus_id in enumerate(self.bus_ids)}
        check_structure(self)

    @property
    def d(self):
        return self.u_high.shape[1]

    @property
    def m(self):
        return len(self.bus_ids)

    @property
    def width(self):
        """Number of unconstrained parameters of one bus."""
        return 4 * self.d - 2

    def branch(self, bus_id, sign):
        k = self._positions[bus_id]
        if sign == HIGH:
            return MonotoneBranchParams(self.u_high[k], self.beta_high[k])
        return MonotoneBranchParams(self.u_low[k], self.beta_low[k])

    def weights(self, sign):
        """Weights and biases of all buses, arrays of shape (m, d)."""
        if sign == HIGH:
            return _weights(self.u_high, self.beta_high, HIGH)
        return _weights(self.u_low, self.beta_low, LOW)

    def to_matrix(self):
        """Unconstrained parameters as an (m, 4d - 2) array, one row [u+, beta+, u-, beta-] per bus."""
        return np.concatenate([self.u_high, self.beta_high, self.u_low, self.beta_low], axis=1)

    def from_matrix(self, matrix):
        """New parameters with the same buses, c and epsilon, read from :meth:`to_matrix` layout."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (self.m, self.width):
            raise DimensionMismatch('parameter matrix has shape {}, expected {}'.format(matrix.shape, (self.m, self.width)))
        d = self.d
        return PolicyParams(self.bus_ids, matrix[:, :d], matrix[:, d:2 * d - 1], matrix[:, 2 * d - 1:3 * d - 1], matrix[:, 3 * d - 1:], self.c, self.epsilon)

    def copy(self):
        return self.from_matrix(self.to_matrix())

    def equals(self, other):
        return (self.bus_ids == other.bus_ids and self.c == other.c and self.epsilon == other.epsilon and
                all(np.array_equal(getattr(self, name), getattr(other, name)) for name in self.ARRAYS))

    def check_network(self, network):
        """Raise :class:`InvariantViolation` if the policy does not control exactly the controlled buses of `network`."""
        if list(self.bus_ids) != network.controlled_ids:
            raise InvariantViolation('the policy controls {} buses {}, the network has {} controlled buses {}'.format(
                self.m, list(self.bus_ids), len(network.controlled_ids), network.controlled_ids))

    def __repr__(self):
        return 'PolicyParams(buses={}, d={}, c={}, epsilon={})'.format(list(self.bus_ids), self.d, self.c, self.epsilon)


def check_structure(params):
    """Raise :class:`InvariantViolation` if `params` cannot define a stable transient policy."""
    m = len(params.bus_ids)
    if m == 0:
        raise InvariantViolation('the policy controls no bus')
    d = params.u_high.shape[1]
    if d < 1:
        raise InvariantViolation('a branch needs at least one unit')
    for name, shape in (('u_high', (m, d)), ('beta_high', (m, d - 1)), ('u_low', (m, d)), ('beta_low', (m, d - 1))):
        array = getattr(params, name)
        if array.shape != shape:
            raise InvariantViolation('{} has shape {}, expected {}'.format(name, array.shape, shape))
        if not np.all(np.isfinite(array)):
            raise InvariantViolation('{} has non-finite entries'.format(name))
    if len(set(params.bus_ids)) != m:
        raise InvariantViolation('duplicated bus ids {}'.format(list(params.bus_ids)))
    if not 0 <= params.c < 1:
        raise InvariantViolation('c = {} is outside [0, 1)'.format(params.c))
    if not 0 < params.epsilon < 1:
        raise InvariantViolation('epsilon = {} is outside (0, 1)'.format(params.epsilon))


def check_derived(params, sign, w, b):
    """
    Raise :class:`InvariantViolation` unless `w` and `b` are the weights and biases derived from
    `params` and satisfy the branch constraints (signed partial sums, b_1 = 0, non-increasing b).
    """
    w = np.asarray(w, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b[..., 0] != 0):
        raise InvariantViolation('the first bias of a {} branch must be 0'.format(sign))
    if np.any(np.diff(b, axis=-1) > 0):
        raise InvariantViolation('the biases of a {} branch must be non-increasing'.format(sign))
    partial_sums = np.cumsum(w, axis=-1)
    if np.any(partial_sums >= 0 if sign == HIGH else partial_sums <= 0):
        raise InvariantViolation('the partial sums of the {} branch weights have the wrong sign'.format(sign))
    expected_w, expected_b = params.weights(sign)
    if not (np.allclose(w, expected_w, rtol=0, atol=STRUCTURE_TOL) and np.allclose(b, expected_b, rtol=0, atol=STRUCTURE_TOL)):
        raise InvariantViolation('the {} branch weights do not derive from its parameters'.format(sign))


def init_policy(network, n_units=parameters.N_UNITS, c=parameters.C_FRACTION, epsilon=parameters.EPSILON):
    """
    Initial policy: u = beta = 0 for every branch, i.e. a unit slope out of the band.

    :param gridvolt.network.Network network: the feeder
    :param int n_units: number of units per branch

    :return: the parameters
    :rtype: PolicyParams
    """
    m = len(network.controlled_ids)
    return PolicyParams(network.controlled_ids, np.zeros((m, n_units)), np.zeros((m, n_units - 1)),
                        np.zeros((m, n_units)), np.zeros((m, n_units - 1)), c, epsilon)


def _scales(params, alpha, q_i, q_min, q_max):
    margin = 1. - params.epsilon
    high = params.c * alpha * np.maximum(q_i - q_min * margin, 0.)
    low = params.c * alpha * np.maximum(q_max * margin - q_i, 0.)
    return high, low


def policy_eval(params, bus, alpha, v_i, q_i):
    """
    Transient policy of one bus. Zero for a bus the policy does not control.

    :param PolicyParams params: the policy
    :param gridvolt.network.Bus bus: the bus
    :param float alpha: barrier gain (step-1)
    :param float v_i: squared voltage of the bus (p.u.)
    :param float q_i: reactive injection of the bus (p.u.)

    :return: the policy output (p.u. step-1)
    :rtype: float
    """
    if bus.id not in params.bus_ids:
        return 0.
    w_high, b_high = branch_weights(params.branch(bus.id, HIGH), HIGH)
    w_low, b_low = branch_weights(params.branch(bus.id, LOW), LOW)
    high, low = _scales(params, alpha, q_i, bus.q_min, bus.q_max)
    return (high * np.tanh(stacked_relu(v_i - bus.v_hi, w_high, b_high, HIGH)) +
            low * np.tanh(stacked_relu(v_i - bus.v_lo, w_low, b_low, LOW)))


def _controlled(params, network, v, q):
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    for name, vector in (('v', v), ('q', q)):
        if vector.shape[-1:] != (network.n,):
            raise DimensionMismatch('{} has shape {}, expected last dimension {}'.format(name, vector.shape, network.n))
    positions = [network.index(bus_id) for bus_id in params.bus_ids]
    return positions, v[..., positions], q[..., positions]


def policy_eval_vector(params, network, alpha, v, q):
    """
    Transient policies of all buses: :func:`policy_eval` at the controlled buses, 0 elsewhere.
    `v` and `q` may carry leading batch dimensions.

    :param PolicyParams params: the policy
    :param gridvolt.network.Network network: the feeder
    :param float alpha: barrier gain (step-1)
    :param numpy.ndarray v: squared voltages (p.u.)
    :param numpy.ndarray q: reactive injections (p.u.)

    :return: the policy outputs (p.u. step-1)
    :rtype: numpy.ndarray
    """
    positions, v_c, q_c = _controlled(params, network, v, q)
    w_high, b_high = params.weights(HIGH)
    w_low, b_low = params.weights(LOW)
    high, low = _scales(params, alpha, q_c, network.q_min[positions], network.q_max[positions])
    pi = np.zeros(np.broadcast(np.asarray(v), np.asarray(q)).shape)
    pi[..., positions] = (high * np.tanh(stacked_relu(v_c - network.v_hi[positions], w_high, b_high, HIGH)) +
                          low * np.tanh(stacked_relu(v_c - network.v_lo[positions], w_low, b_low, LOW)))
    return pi


def _branch_gradient(u, beta, z, sign):
    """Branch output and its derivatives with respect to u and beta, at ReLU input offset z (..., m)."""
    w, b = _weights(u, beta, sign)
    pre = z[..., np.newaxis] + b
    active = pre > 0
    a = np.where(active, pre, 0.)
    xi = np.sum(w * a, axis=-1)
    partial_sums = np.cumsum(w, axis=-1)
    a_next = np.concatenate([a[..., 1:], np.zeros(a.shape[:-1] + (1,))], axis=-1)
    d_u = partial_sums * (a - a_next)
    tail = np.cumsum((w * active)[..., ::-1], axis=-1)[..., ::-1]
    d_beta = -np.exp(beta) * tail[..., 1:]
    return xi, d_u, d_beta


def policy_gradient(params, network, alpha, v, q):
    """
    Derivative of each bus policy with respect to its own unconstrained parameters, in the
    layout of :meth:`PolicyParams.to_matrix`.

    :return: array of shape (..., m, 4d - 2)
    :rtype: numpy.ndarray
    """
    positions, v_c, q_c = _controlled(params, network, v, q)
    high, low = _scales(params, alpha, q_c, network.q_min[positions], network.q_max[positions])
    xi_high, du_high, dbeta_high = _branch_gradient(params.u_high, params.beta_high, v_c - network.v_hi[positions], HIGH)
    xi_low, du_low, dbeta_low = _branch_gradient(params.u_low, params.beta_low, network.v_lo[positions] - v_c, LOW)
    factor_high = (high * (1. - np.tanh(xi_high) ** 2))[..., np.newaxis]
    factor_low = (low * (1. - np.tanh(xi_low) ** 2))[..., np.newaxis]
    return np.concatenate([factor_high * du_high, factor_high * dbeta_high, factor_low * du_low, factor_low * dbeta_low], axis=-1)
