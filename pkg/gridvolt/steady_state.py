# -*- coding: utf-8 -*-
"""
    gridvolt.steady_state
    ~~~~~~~~~~~~~~~~~~~~~

    The module :mod:`gridvolt.steady_state` defines the steady-state volt-var problem

        min_q  F(q) = 1/2 q' C_q q + 1/2 q' X q + q' (v_env - v_nom)   s.t.  q_lo <= q <= q_hi,

    its gradient, the projected-gradient reference solver and an exhaustive active-set
    oracle used to certify optimality on small problems.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from gridvolt import parameters
from gridvolt.errors import DimensionMismatch, InvalidConfig, MaxIterationsExceeded, ProblemTooLarge
from gridvolt.network import voltage

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SteadyStateProblem:
    """
    Box-constrained strictly convex quadratic problem of a feeder under a disturbance.
    Uncontrolled buses have the degenerate box [0, 0].
    """
    network: object
    C_q: np.ndarray            #: diagonal of the cost matrix, eta / s_bar (p.u.)
    delta_v_tilde: np.ndarray  #: v_env - v_nom (p.u.)
    q_lo: np.ndarray           #: lower capacity bounds (p.u.)
    q_hi: np.ndarray           #: upper capacity bounds (p.u.)

    def __post_init__(self):
        n = self.network.n
        for name in ('C_q', 'delta_v_tilde', 'q_lo', 'q_hi'):
            if np.shape(getattr(self, name)) != (n,):
                raise DimensionMismatch('{} must have shape ({},)'.format(name, n))
        if not np.all(self.C_q > 0):
            raise InvalidConfig('the cost coefficients must be positive')
        free = self.q_lo < self.q_hi
        if not np.all(free | (self.q_lo == self.q_hi)) or not np.array_equal(free, self.network.controlled):
            raise InvalidConfig('q_lo < q_hi is required on controlled buses, q_lo == q_hi elsewhere')

    @classmethod
    def from_network(cls, network, v_env):
        """
        :param gridvolt.network.Network network: the feeder
        :param numpy.ndarray v_env: uncontrollable voltage component (p.u.)

        :return: the problem of `network` under `v_env`
        :rtype: SteadyStateProblem
        """
        v_env = np.asarray(v_env, dtype=float)
        if v_env.shape != (network.n,):
            raise DimensionMismatch('v_env must have shape ({},)'.format(network.n))
        return cls(network, network.eta / network.s_bar, v_env - network.v_nom, np.array(network.q_min), np.array(network.q_max))

    def with_env(self, v_env):
        """Same feeder and costs, other disturbance."""
        return SteadyStateProblem(self.network, self.C_q, np.asarray(v_env, dtype=float) - self.v_nom, self.q_lo, self.q_hi)

    @property
    def v_nom(self):
        return self.network.v_nom

    @property
    def v_env(self):
        return self.delta_v_tilde + self.network.v_nom

    @property
    def free(self):
        """Mask of the coordinates with a non-degenerate box."""
        return self.q_lo < self.q_hi

    def clamp(self, q):
        return np.clip(q, self.q_lo, self.q_hi)

    def hessian(self):
        return np.diag(self.C_q) + self.network.X


@dataclass
class SolveReport:
    """Solution of a :class:`SteadyStateProblem`."""
    q_star: np.ndarray
    v_star: np.ndarray
    objective: float
    iterations: int
    residual: float  #: sup-norm of the projected-gradient fixed-point residual (p.u.)
    converged: bool = True
    history: list = field(default_factory=list, repr=False)  #: objective at each iterate, if recorded


def _check_q(problem, q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (problem.network.n,):
        raise DimensionMismatch('q has shape {}, expected last dimension {}'.format(q.shape, problem.network.n))
    return q


def objective(problem, q):
    """
    F(q) = 1/2 q' C_q q + 1/2 q' X q + q' delta_v_tilde. `q` may carry leading batch dimensions.

    :param SteadyStateProblem problem: the problem
    :param numpy.ndarray q: reactive injections (p.u.)

    :return: F(q)
    :rtype: float or numpy.ndarray
    """
    q = _check_q(problem, q)
    return 0.5 * np.sum(problem.C_q * q ** 2, axis=-1) + 0.5 * np.sum(q * (q @ problem.network.X), axis=-1) + np.sum(q * problem.delta_v_tilde, axis=-1)


def nodal_objective(problem, q):
    """
    F(q) in its decomposed form, sum_i C_i(q_i) + 1/2 q_i (v_i + v_env_i - 2 v_nom_i), with v the
    steady-state voltage of q.
    """
    q = _check_q(problem, q)
    v = voltage(problem.network, q, problem.v_env)
    return np.sum(0.5 * problem.C_q * q ** 2 + 0.5 * q * (v + problem.v_env - 2. * problem.v_nom), axis=-1)


def gradient(problem, q, v):
    """
    Gradient of F, C_q q + v - v_nom. Each entry only uses the measurements of its own
    bus; `v` must be the voltage produced by `q` (caller's duty).

    :param SteadyStateProblem problem: the problem
    :param numpy.ndarray q: reactive injections (p.u.)
    :param numpy.ndarray v: squared voltages (p.u.)

    :return: the gradient (p.u.)
    :rtype: numpy.ndarray
    """
    q = _check_q(problem, q)
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] != (problem.network.n,):
        raise DimensionMismatch('v has shape {}, expected last dimension {}'.format(v.shape, problem.network.n))
    return problem.C_q * q + v - problem.v_nom


def step_size_bound(problem):
    """
    :return: 2 / lambda_max(C_q + X), the strict upper bound of the projected-gradient step
    :rtype: float
    """
    return 2. / scipy.linalg.eigvalsh(problem.hessian())[-1]


def default_step(problem):
    return parameters.PGD_STEP_FRACTION * step_size_bound(problem)


def kkt_residual(problem, q):
    """
    Sup-norm of q - clamp(q - grad F(q)); zero exactly at the optimum.

    :rtype: float
    """
    q = _check_q(problem, q)
    v = voltage(problem.network, q, problem.v_env)
    return float(np.max(np.abs(q - problem.clamp(q - gradient(problem, q, v))), initial=0.))


def projected_gradient_solve(problem, gamma=None, tol=parameters.PGD_TOL, max_iter=parameters.PGD_MAX_ITER, q0=None, record=False, strict=True):
    """
    Projected-gradient iterations q <- clamp(q - gamma grad F(q), q_lo, q_hi), stopped when the
    sup-norm of the fixed-point residual falls below `tol`.

    :param SteadyStateProblem problem: the problem
    :param float gamma: step, in (0, :func:`step_size_bound`); defaults to :func:`default_step`
    :param float tol: tolerance on the fixed-point residual (p.u.)
    :param int max_iter: maximal number of iterations
    :param numpy.ndarray q0: initial iterate, clamped into the box; defaults to 0
    :param bool record: if True, the objective of every iterate is kept in the report history
    :param bool strict: if True, raise when `max_iter` is reached, else return the report flagged as not converged

    :return: the solve report
    :rtype: SolveReport

    :raises MaxIterationsExceeded: if the tolerance is not reached in `max_iter` iterations
    """
    bound = step_size_bound(problem)
    if gamma is None:
        gamma = parameters.PGD_STEP_FRACTION * bound
    if not 0 < gamma < bound:
        raise InvalidConfig('the step {} must lie in (0, {})'.format(gamma, bound))
    if tol <= 0:
        raise InvalidConfig('the tolerance must be positive')

    network = problem.network
    q = problem.clamp(np.zeros(network.n) if q0 is None else _check_q(problem, q0))
    history = []
    residual = np.inf
    iteration = 0
    for iteration in range(max_iter + 1):
        v = voltage(network, q, problem.v_env)
        if record:
            history.append(float(objective(problem, q)))
        q_next = problem.clamp(q - gamma * gradient(problem, q, v))
        residual = float(np.max(np.abs(q - q_next), initial=0.))
        if residual < tol or iteration == max_iter:
            break
        q = q_next
        if iteration % 1000 == 0:
            logger.debug('Projected gradient iteration %d: residual %g', iteration, residual)

    report = SolveReport(q, voltage(network, q, problem.v_env), float(objective(problem, q)), iteration, residual, residual < tol, history)
    if not report.converged:
        logger.warning('Projected gradient stopped after %d iterations with residual %g', iteration, residual)
        if strict:
            raise MaxIterationsExceeded('no convergence in {} iterations (residual {:g})'.format(max_iter, residual), report)
    else:
        logger.debug('Projected gradient converged in %d iterations', iteration)
    return report


def qp_oracle(problem):
    """
    Exact solution by enumeration of the active sets: every free coordinate is either at its
    lower bound, at its upper bound or free, the free block is solved as a linear system and
    the best feasible candidate is kept.

    Pinned coordinates are not enumerated, so networks of any size are accepted as long as at
    most :data:`~gridvolt.parameters.MAX_ORACLE_VARIABLES` buses are controlled; larger problems
    are left to :func:`projected_gradient_solve`.

    :param SteadyStateProblem problem: the problem, with at most :data:`~gridvolt.parameters.MAX_ORACLE_VARIABLES` free coordinates

    :return: the solve report, `iterations` being the number of visited patterns
    :rtype: SolveReport

    :raises ProblemTooLarge: if the problem has too many free coordinates
    """
    free = np.flatnonzero(problem.free)
    if len(free) > parameters.MAX_ORACLE_VARIABLES:
        raise ProblemTooLarge('{} free variables, the oracle enumerates at most {}'.format(len(free), parameters.MAX_ORACLE_VARIABLES))

    hessian = problem.hessian()
    best_q, best_objective = None, np.inf
    patterns = 0
    for pattern in itertools.product((-1, 0, 1), repeat=len(free)):
        patterns += 1
        pattern = np.array(pattern, dtype=int)
        q = problem.q_lo.copy()  # pinned coordinates have q_lo == q_hi
        q[free[pattern == 1]] = problem.q_hi[free[pattern == 1]]
        inner = free[pattern == 0]
        if len(inner):
            q[inner] = 0.
            rhs = -(problem.delta_v_tilde[inner] + hessian[inner] @ q)
            q[inner] = scipy.linalg.solve(hessian[np.ix_(inner, inner)], rhs, assume_a='pos')
            if np.any(q[inner] < problem.q_lo[inner]) or np.any(q[inner] > problem.q_hi[inner]):
                continue
        value = float(objective(problem, q))
        if value < best_objective:
            best_q, best_objective = q, value

    report = SolveReport(best_q, voltage(problem.network, best_q, problem.v_env), best_objective, patterns, kkt_residual(problem, best_q))
    logger.debug('Active-set oracle visited %d patterns, objective %g', patterns, best_objective)
    return report
