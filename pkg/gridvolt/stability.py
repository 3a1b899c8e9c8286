# -*- coding: utf-8 -*-
"""
    gridvolt.stability
    ~~~~~~~~~~~~~~~~~~

    The module :mod:`gridvolt.stability` checks numerically the stability certificate of the
    combined controller on sampled states:

    * the slope condition 2 sigma_max(K(v)) <= sigma_min(C_q X^-1 + I), where K(v) is the
      diagonal matrix of the policy slopes around the optimal voltage v*,
    * the descent inequality ||grad F||^2 - 2 <pi(v), grad F> >= 0 implied by it,
    * the decrease of F along simulated trajectories, up to the Euler discretization error.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from gridvolt import parameters
from gridvolt.controller import Variant, control
from gridvolt.errors import DegenerateReference, DimensionMismatch, SingularX
from gridvolt.network import voltage
from gridvolt.policy import policy_eval_vector
from gridvolt.simulation import run_batch
from gridvolt.steady_state import gradient, kkt_residual, objective, projected_gradient_solve, qp_oracle

logger = logging.getLogger(__name__)

#: condition number of X above which it is treated as singular
SINGULAR_COND = 1e12
#: tolerance on v* lying inside the band
REFERENCE_TOL = 1e-9
#: number of free variables up to which v* comes from the active-set oracle
ORACLE_REFERENCE_SIZE = 6
#: tolerance on the last rate for a state to count as an equilibrium
EQUILIBRIUM_TOL = 1e-12


@dataclass
class CertificateReport:
    n_samples: int
    condition_violations: int
    worst_margin: float            #: min over the samples of sigma_min(C_q X^-1 + I) - 2 sigma_max(K(v))
    lemma_violations: int          #: samples satisfying the slope condition where the descent inequality fails
    lyapunov_violations: int       #: steps of the simulated trajectories where F increased beyond the tolerance
    max_lyapunov_increase: float
    n_trajectories: int = 0

    @property
    def passed(self):
        return self.condition_violations == 0 and self.lemma_violations == 0 and self.lyapunov_violations == 0


def policy_slope_matrix(policy, network, alpha, v, v_star, q):
    """
    K(v) = -diag(pi_i(v_i) / (v_i - v*_i)), with 0 where v_i = v*_i. The policy is zero on
    the band and non-increasing, so every diagonal entry is >= 0.

    :param gridvolt.policy.PolicyParams policy: the transient policy
    :param gridvolt.network.Network network: the feeder
    :param float alpha: barrier gain (step-1)
    :param numpy.ndarray v: squared voltages (p.u.)
    :param numpy.ndarray v_star: optimal steady-state voltages (p.u.)
    :param numpy.ndarray q: reactive injections (p.u.)

    :return: the diagonal matrix K(v)
    :rtype: numpy.ndarray

    :raises DegenerateReference: if v* leaves the band at a controlled bus
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    if v.shape != (network.n,) or v_star.shape != (network.n,):
        raise DimensionMismatch('v and v_star must have shape ({},)'.format(network.n))
    controlled = network.controlled
    outside = (v_star < network.v_lo - REFERENCE_TOL) | (v_star > network.v_hi + REFERENCE_TOL)
    if np.any(outside & controlled):
        raise DegenerateReference('the optimal voltage leaves the band at buses {}'.format(
            [bus_id for bus_id, flag in zip(range(1, network.n + 1), outside & controlled) if flag]))
    pi = policy_eval_vector(policy, network, alpha, v, q)
    offset = v - v_star
    slopes = np.divide(pi, offset, out=np.zeros(network.n), where=offset != 0)
    return np.diag(-slopes)


def check_theorem_condition(problem, K):
    """
    :param gridvolt.steady_state.SteadyStateProblem problem: the problem
    :param numpy.ndarray K: the diagonal matrix K(v), or its diagonal

    :return: whether 2 sigma_max(K) <= sigma_min(C_q X^-1 + I), and the margin
        sigma_min(C_q X^-1 + I) - 2 sigma_max(K)
    :rtype: (bool, float)

    :raises SingularX: if X is numerically singular
    """
    diagonal = np.diag(K) if np.ndim(K) == 2 else np.asarray(K, dtype=float)
    margin = _sigma_min(problem) - 2. * np.max(np.abs(diagonal), initial=0.)
    return bool(margin >= 0), float(margin)


def _sigma_min(problem):
    X = problem.network.X
    if np.linalg.cond(X) > SINGULAR_COND:
        raise SingularX('X is singular (condition number {:g})'.format(np.linalg.cond(X)))
    # C_q X^-1 = (X^-1 C_q)' since both are symmetric
    matrix = scipy.linalg.solve(X, np.diag(problem.C_q), assume_a='pos').T + np.eye(problem.network.n)
    return float(scipy.linalg.svdvals(matrix)[-1])


def check_lemma1(problem, policy, v, q, alpha=parameters.ALPHA):
    """
    Left-hand side of the descent inequality, ||grad F(q)||^2 - 2 <pi(v), grad F(q)>.
    Non-negative whenever the slope condition holds at v. `v` and `q` may carry leading batch
    dimensions.

    :rtype: float or numpy.ndarray
    """
    grad = gradient(problem, q, v)
    pi = policy_eval_vector(policy, problem.network, alpha, v, q)
    return np.sum(grad ** 2, axis=-1) - 2. * np.sum(pi * grad, axis=-1)


def lyapunov_tolerance(trajectory, problem):
    """0.5 L_F h^2 max ||xi||^2 with L_F = lambda_max(C_q + X), over the applied steps."""
    lipschitz = scipy.linalg.eigvalsh(problem.hessian())[-1]
    applied = trajectory.xi[:-1]
    largest = np.max(np.sum(applied ** 2, axis=-1), initial=0.)
    return 0.5 * lipschitz * trajectory.h ** 2 * largest


def lyapunov_monitor(trajectory, problem):
    """
    Count the steps where F increases by more than the discretization tolerance.

    :param gridvolt.simulation.Trajectory trajectory: a simulated trajectory
    :param gridvolt.steady_state.SteadyStateProblem problem: the problem of its disturbance

    :return: the number of violations and the largest increase of F
    :rtype: (int, float)
    """
    values = objective(problem, trajectory.q)
    increases = np.diff(values)
    if not len(increases):
        return 0, 0.
    tolerance = lyapunov_tolerance(trajectory, problem)
    # rounding of F itself
    tolerance += 1e3 * np.finfo(float).eps * max(1., np.max(np.abs(values)))
    return int(np.sum(increases > tolerance)), float(np.max(increases))


def optimal_reference(problem):
    """Optimal steady state of `problem`, from the oracle on small problems, else projected gradient."""
    if np.sum(problem.free) <= ORACLE_REFERENCE_SIZE:
        return qp_oracle(problem)
    return projected_gradient_solve(problem)


def equilibrium_optimality(config, problem, v, q):
    """
    KKT residual of q when the configured controller is at rest with v in the band, None
    otherwise. At rest, the combined controller only stops at the optimum.

    :rtype: float or None
    """
    decision = control(config, problem, v, q)
    network = problem.network
    monitored = network.controlled
    at_rest = np.max(np.abs(decision.xi), initial=0.) <= EQUILIBRIUM_TOL
    in_band = np.all((v[monitored] >= network.v_lo[monitored]) & (v[monitored] <= network.v_hi[monitored]))
    if not (at_rest and in_band):
        return None
    return kkt_residual(problem, q)


def _sample_states(problem, results, n_samples, rng):
    """States of the simulated trajectories `results`, one half, and uniform draws of (v_env, q) in the voltage box, the other half."""
    network = problem.network
    states = []
    n_trajectory = n_samples // 2 if results else 0
    for k in range(n_trajectory):
        trajectory, _ = results[k % len(results)]
        t = rng.integers(len(trajectory.times))
        states.append((trajectory.v_env, trajectory.v[t], trajectory.q[t]))
    box = parameters.CERT_VOLTAGE_BOX
    for _ in range(n_samples - n_trajectory):
        v_env = network.v_nom * (1. + rng.uniform(-box, box, network.n))
        q = rng.uniform(problem.q_lo, problem.q_hi)
        states.append((v_env, voltage(network, q, v_env), q))
    return states


def certify(config, problem, scenarios=None, n_samples=parameters.N_CERT_SAMPLES, seed=0, lyapunov_h=0.01):
    """
    Sampling certificate of a policy.

    The slope condition and the descent inequality are evaluated on `n_samples` states, half
    of them taken on trajectories of `scenarios`, half drawn uniformly in a box of
    +/- :data:`~gridvolt.parameters.CERT_VOLTAGE_BOX` around v_nom. States whose optimal
    voltage leaves the band, which the certificate does not cover, are redrawn, and a warning
    is logged if fewer than `n_samples` states could be evaluated. The decrease
    of F is monitored on the trajectories of `scenarios` simulated with the period
    `lyapunov_h`.

    :param gridvolt.controller.ControllerConfig config: the controller, with the policy to certify
    :param gridvolt.steady_state.SteadyStateProblem problem: costs and bounds
    :param list scenarios: the :class:`~gridvolt.simulation.Scenario` objects
    :param int n_samples: number of sampled states
    :param int seed: seed of the sampling
    :param float lyapunov_h: sampling period of the monitored trajectories

    :return: the report
    :rtype: CertificateReport
    """
    scenarios = list(scenarios or [])
    network = problem.network
    policy = config.policy
    policy.check_network(network)
    rng = np.random.default_rng(seed)
    references = {}

    def reference(v_env):
        key = v_env.tobytes()
        if key not in references:
            references[key] = optimal_reference(problem.with_env(v_env)).v_star
        return references[key]

    condition_violations, lemma_violations, worst_margin = 0, 0, np.inf
    sigma_min = _sigma_min(problem)
    evaluated = 0
    results = run_batch(None, config.replace(variant=Variant.TASRL), problem, network, scenarios) if scenarios else []
    for _ in range(parameters.CERT_REDRAW_ROUNDS):
        for v_env, v, q in _sample_states(problem, results, n_samples - evaluated, rng):
            try:
                K = policy_slope_matrix(policy, network, config.alpha, v, reference(v_env), q)
            except DegenerateReference:
                continue
            evaluated += 1
            margin = sigma_min - 2. * np.max(np.abs(np.diag(K)), initial=0.)
            worst_margin = min(worst_margin, margin)
            if margin < 0:
                condition_violations += 1
                continue
            lhs = check_lemma1(problem.with_env(v_env), policy, v, q, config.alpha)
            if lhs < -parameters.LEMMA_TOL:
                lemma_violations += 1
        if evaluated >= n_samples:
            break
    if evaluated < n_samples:
        logger.warning('Only %d of %d sampled states have their optimal voltage in the band after %d rounds of draws; the certificate covers those only',
                       evaluated, n_samples, parameters.CERT_REDRAW_ROUNDS)

    lyapunov_violations, max_increase, n_trajectories = 0, -np.inf, 0
    if scenarios:
        fine = config.replace(variant=Variant.TASRL, h=lyapunov_h, alpha=min(config.alpha, 1. / lyapunov_h))
        for trajectory, _ in run_batch(None, fine, problem, network, scenarios):
            violations, increase = lyapunov_monitor(trajectory, problem.with_env(trajectory.v_env))
            lyapunov_violations += violations
            max_increase = max(max_increase, increase)
            n_trajectories += 1

    report = CertificateReport(evaluated, condition_violations, float(worst_margin), lemma_violations,
                               lyapunov_violations, float(max_increase) if n_trajectories else 0., n_trajectories)
    logger.info('Certificate on %d states and %d trajectories: worst margin %g, %d condition, %d descent and %d decrease violations',
                report.n_samples, n_trajectories, report.worst_margin, condition_violations, lemma_violations, lyapunov_violations)
    return report
