# -*- coding: utf-8 -*-
"""
    gridvolt.controller
    ~~~~~~~~~~~~~~~~~~~

    The module :mod:`gridvolt.controller` defines the safe controllers. A nominal reactive
    power rate is filtered by the control barrier function quadratic program

        min_xi 1/2 ||xi - raw||^2  s.t.  dg/dq xi <= -alpha g(q),   g(q) = [q - q_hi; q_lo - q],

    whose solution is the componentwise clamp of `raw` onto [alpha (q_lo - q), alpha (q_hi - q)].
    The nominal rate is pi(v) - grad F(q) for the combined controller, -grad F(q) for the safe
    gradient flow and pi(v) for the transient-only controller.

    All controller laws accept states with leading batch dimensions.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from gridvolt import parameters
from gridvolt.errors import DimensionMismatch, InfeasibleState, InvalidAlpha, InvalidConfig
from gridvolt.policy import PolicyParams, policy_eval_vector
from gridvolt.steady_state import gradient

logger = logging.getLogger(__name__)


class Variant(enum.Enum):
    TASRL = 'tasrl'                      #: transient policy and steady-state gradient
    SAFE_GRADIENT_FLOW = 'sgf'           #: steady-state gradient only
    TRANSIENT_ONLY = 'transient'         #: transient policy only


@dataclass(frozen=True, eq=False)
class ControllerConfig:
    """Configuration of a safe controller. h * alpha <= 1 keeps the sampled system in the box."""
    alpha: float = parameters.ALPHA        #: barrier gain (step-1)
    h: float = parameters.H                #: sampling period
    variant: Variant = Variant.TASRL
    policy: Optional[PolicyParams] = None

    def __post_init__(self):
        object.__setattr__(self, 'variant', Variant(self.variant))
        if not self.alpha > 0:
            raise InvalidAlpha('alpha must be positive, got {}'.format(self.alpha))
        if not self.h > 0:
            raise InvalidConfig('h must be positive, got {}'.format(self.h))
        if self.h * self.alpha > 1:
            raise InvalidAlpha('h * alpha = {} exceeds 1, the sampled controller would leave the capacity box'.format(self.h * self.alpha))
        if self.variant is not Variant.SAFE_GRADIENT_FLOW and self.policy is None:
            raise InvalidConfig('the {} controller needs a policy'.format(self.variant.value))

    def replace(self, **changes):
        values = dict(alpha=self.alpha, h=self.h, variant=self.variant, policy=self.policy)
        values.update(changes)
        return ControllerConfig(**values)


@dataclass
class ControlDecision:
    xi: np.ndarray       #: reactive power rates (p.u. step-1)
    clipped: np.ndarray  #: mask of the buses where the filter modified the nominal rate


def barrier(q, q_lo, q_hi):
    """
    g(q) = [q - q_hi; -q + q_lo]; q is in the box iff every entry is <= 0.

    :return: array whose last dimension is twice the one of `q`
    :rtype: numpy.ndarray
    """
    q = np.asarray(q, dtype=float)
    q_lo = np.asarray(q_lo, dtype=float)
    q_hi = np.asarray(q_hi, dtype=float)
    if not (q.shape[-1:] == q_lo.shape[-1:] == q_hi.shape[-1:]):
        raise DimensionMismatch('q, q_lo and q_hi must have the same length')
    return np.concatenate([q - q_hi, q_lo - q], axis=-1)


def rate_bounds(config, q, q_lo, q_hi):
    """
    Bounds alpha (q_lo - q) <= xi <= alpha (q_hi - q) of the filtered rate.

    :raises InfeasibleState: if q lies outside its box by more than :data:`~gridvolt.parameters.FEASIBILITY_TOL`
    """
    q = np.asarray(q, dtype=float)
    if np.any(q < q_lo - parameters.FEASIBILITY_TOL) or np.any(q > q_hi + parameters.FEASIBILITY_TOL):
        raise InfeasibleState('q lies outside its capacity box')
    return config.alpha * (q_lo - q), config.alpha * (q_hi - q)


def _filter(config, problem, raw, q):
    lower, upper = rate_bounds(config, q, problem.q_lo, problem.q_hi)
    xi = np.minimum(np.maximum(raw, lower), upper)
    return ControlDecision(xi, xi != raw)


def _policy(config, problem, v, q):
    return policy_eval_vector(config.policy, problem.network, config.alpha, v, q)


def tasrl_control(config, problem, v, q):
    """
    xi = clamp(pi(v) - grad F(q), alpha (q_lo - q), alpha (q_hi - q)).

    :param ControllerConfig config: the controller, with a policy
    :param gridvolt.steady_state.SteadyStateProblem problem: costs and capacity bounds
    :param numpy.ndarray v: squared voltages (p.u.)
    :param numpy.ndarray q: reactive injections, inside the box (p.u.)

    :return: the filtered rate
    :rtype: ControlDecision
    """
    raw = _policy(config, problem, v, q) - gradient(problem, q, v)
    return _filter(config, problem, raw, q)


def safe_gradient_flow_control(config, problem, v, q):
    """xi = clamp(-grad F(q), alpha (q_lo - q), alpha (q_hi - q))."""
    return _filter(config, problem, -gradient(problem, q, v), q)


def transient_only_control(config, problem, v, q):
    """xi = clamp(pi(v), alpha (q_lo - q), alpha (q_hi - q))."""
    return _filter(config, problem, _policy(config, problem, v, q), q)


#: the controller law of each variant
CONTROLLERS = {Variant.TASRL: tasrl_control,
               Variant.SAFE_GRADIENT_FLOW: safe_gradient_flow_control,
               Variant.TRANSIENT_ONLY: transient_only_control}


def nominal_rate(config, problem, v, q):
    """Rate requested by the variant before filtering."""
    raw = np.zeros(np.broadcast(np.asarray(v), np.asarray(q)).shape)
    if config.variant is not Variant.TRANSIENT_ONLY:
        raw = raw - gradient(problem, q, v)
    if config.variant is not Variant.SAFE_GRADIENT_FLOW:
        raw = raw + _policy(config, problem, v, q)
    return raw


def control(config, problem, v, q, exploration=None):
    """
    Control of the configured variant. `exploration` is added to the nominal rate before the
    filter, so that explored actions remain safe.

    :rtype: ControlDecision
    """
    if exploration is None:
        return CONTROLLERS[config.variant](config, problem, v, q)
    return _filter(config, problem, nominal_rate(config, problem, v, q) + exploration, q)


def cbf_qp_oracle(config, raw, q, q_lo, q_hi, tol=parameters.CBF_ORACLE_TOL, max_iter=100000):
    """
    Solve min 1/2 ||xi - raw||^2 s.t. dg/dq xi <= -alpha g(q) by projected gradient ascent on the
    dual of the barrier constraints, without using the closed form.

    :param ControllerConfig config: the controller (only alpha is used)
    :param numpy.ndarray raw: nominal rates, possibly batched
    :param numpy.ndarray q: reactive injections
    :param numpy.ndarray q_lo: lower capacity bounds
    :param numpy.ndarray q_hi: upper capacity bounds
    :param float tol: tolerance on the primal change and on the constraint violation

    :return: the filtered rates
    :rtype: numpy.ndarray
    """
    raw = np.asarray(raw, dtype=float)
    q = np.asarray(q, dtype=float)
    n = raw.shape[-1]
    jacobian = np.concatenate([np.eye(n), -np.eye(n)])  # dg/dq
    limit = -config.alpha * barrier(q, q_lo, q_hi)
    multipliers = np.zeros(np.broadcast(raw, q).shape[:-1] + (2 * n,))
    step = 0.5  # 1 / lambda_max(J J')
    xi = raw
    for iteration in range(max_iter):
        xi_next = raw - multipliers @ jacobian
        slack = xi_next @ jacobian.T - limit
        multipliers = np.maximum(multipliers + step * slack, 0.)
        change = np.max(np.abs(xi_next - xi), initial=0.)
        xi = xi_next
        if iteration > 0 and change < tol and np.max(slack, initial=0.) < tol:
            break
    else:
        logger.warning('CBF-QP oracle stopped after %d iterations', max_iter)
    return xi


def nagumo_slack(config, xi, q, q_lo, q_hi):
    """
    -alpha g(q) - dg/dq xi; every entry is >= 0 iff xi satisfies the barrier condition.
    """
    xi = np.asarray(xi, dtype=float)
    return -config.alpha * barrier(q, q_lo, q_hi) - np.concatenate([xi, -xi], axis=-1)
