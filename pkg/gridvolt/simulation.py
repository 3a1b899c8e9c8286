# -*- coding: utf-8 -*-
"""
    gridvolt.simulation
    ~~~~~~~~~~~~~~~~~~~

    The module :mod:`gridvolt.simulation` runs the sampled closed loop

        q(t + 1) = q(t) + h xi(t),    v(t + 1) = X q(t + 1) + v_env,

    generates disturbance scenarios and computes the transient and steady-state metrics of
    an episode. :class:`Simulation` is the front-end of the model.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import enum
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from gridvolt import parameters
from gridvolt.controller import ControllerConfig, Variant, control
from gridvolt.errors import DimensionMismatch, InfeasibleState, InvalidConfig, SafetyViolation
from gridvolt.network import voltage
from gridvolt.steady_state import SteadyStateProblem, kkt_residual, objective

logger = logging.getLogger(__name__)


class ScenarioKind(enum.Enum):
    HIGH_VOLTAGE = 'high'
    LOW_VOLTAGE = 'low'


@dataclass(frozen=True, eq=False)
class Scenario:
    """A disturbance: constant v_env over `horizon` steps, starting from `q0`."""
    v_env: np.ndarray                 #: uncontrollable voltage component (p.u.)
    q0: np.ndarray = None             #: initial reactive injections, 0 if None (p.u.)
    horizon: int = parameters.HORIZON  #: number of steps t_f
    seed: int = 0

    def __post_init__(self):
        v_env = np.array(self.v_env, dtype=float)
        q0 = np.zeros_like(v_env) if self.q0 is None else np.array(self.q0, dtype=float)
        if v_env.ndim != 1 or q0.shape != v_env.shape:
            raise DimensionMismatch('v_env and q0 must be vectors of the same length')
        if not np.all(np.isfinite(v_env)) or not np.all(np.isfinite(q0)):
            raise InvalidConfig('the scenario must be finite')
        if int(self.horizon) < 1:
            raise InvalidConfig('the horizon must be at least 1 step')
        object.__setattr__(self, 'v_env', v_env)
        object.__setattr__(self, 'q0', q0)
        object.__setattr__(self, 'horizon', int(self.horizon))


@dataclass
class Trajectory:
    """Rows t = 0..horizon; the control of the last row is computed but not applied."""
    times: np.ndarray             #: step indices
    v: np.ndarray                 #: squared voltages (p.u.)
    q: np.ndarray                 #: reactive injections (p.u.)
    xi: np.ndarray                #: reactive power rates (p.u. step-1)
    cost: np.ndarray              #: sum over the buses of the step costs
    clipped_fraction: np.ndarray  #: fraction of the controlled buses where the filter was active
    v_env: np.ndarray = None      #: disturbance of the episode (p.u.)
    h: float = parameters.H       #: sampling period

    @property
    def horizon(self):
        return len(self.times) - 1


@dataclass
class EpisodeMetrics:
    recovery_time: int                #: first step after which every monitored voltage stays in its band (horizon + 1 if never)
    transient_cost: float             #: sum over t < horizon of discount^t h cost(t)
    steady_state_objective: float     #: F(q(horizon))
    converged: bool                   #: sup-norm of the last control below CONVERGENCE_TOL
    final_kkt_residual: float         #: KKT residual of q(horizon)
    clipped_steps: float = 0.         #: fraction of applied steps where the filter was active on some bus
    extra: dict = field(default_factory=dict, repr=False)


def step_cost(problem, v, q, v_env):
    """
    Sum over the buses of C_i(q_i) + 1/2 q_i (v_i + v_env_i - 2 v_nom_i). Arguments may carry
    leading batch dimensions.

    :rtype: float or numpy.ndarray
    """
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    v_env = np.asarray(v_env, dtype=float)
    n = problem.network.n
    if not (v.shape[-1:] == q.shape[-1:] == v_env.shape[-1:] == (n,)):
        raise DimensionMismatch('v, q and v_env must have last dimension {}'.format(n))
    return np.sum(0.5 * problem.C_q * q ** 2 + 0.5 * q * (v + v_env - 2. * problem.v_nom), axis=-1)


def bus_costs(problem, v, q, v_env):
    """Per-bus terms of :func:`step_cost`."""
    return 0.5 * problem.C_q * q ** 2 + 0.5 * q * (v + v_env - 2. * problem.v_nom)


def _advance(controller, config, problem, network, v, q, v_env, exploration=None):
    if controller is None:
        decision = control(config, problem, v, q, exploration)
    else:
        decision = controller(config, problem, v, q)
    q_next = q + config.h * decision.xi
    # the filter keeps q_next in the box up to rounding, which is removed here
    excess = np.maximum(q_next - problem.q_hi, problem.q_lo - q_next)
    if np.any(excess > parameters.FEASIBILITY_TOL):
        raise SafetyViolation('the reactive injections left their capacity box by {:g}'.format(np.max(excess)))
    q_next = np.clip(q_next, problem.q_lo, problem.q_hi)
    return q_next, voltage(network, q_next, v_env), decision


def step(controller, config, problem, network, v, q):
    """
    One sampling period of the closed loop.

    :param callable controller: a controller law of :mod:`gridvolt.controller`, or None for the configured variant
    :param gridvolt.controller.ControllerConfig config: the controller configuration
    :param gridvolt.steady_state.SteadyStateProblem problem: the problem of the current disturbance
    :param gridvolt.network.Network network: the feeder
    :param numpy.ndarray v: squared voltages (p.u.)
    :param numpy.ndarray q: reactive injections, inside the box (p.u.)

    :return: q(t + 1), v(t + 1) and the applied rate
    :rtype: (numpy.ndarray, numpy.ndarray, numpy.ndarray)

    :raises SafetyViolation: if q(t + 1) leaves the box (unreachable when h alpha <= 1)
    """
    q_next, v_next, decision = _advance(controller, config, problem, network, np.asarray(v, dtype=float), np.asarray(q, dtype=float), problem.v_env)
    return q_next, v_next, decision.xi


def in_band(network, v):
    """Whether every controlled bus voltage lies in its band; `v` may carry leading dimensions."""
    monitored = network.controlled
    return np.all((v[..., monitored] >= network.v_lo[monitored]) & (v[..., monitored] <= network.v_hi[monitored]), axis=-1)


def recovery_time(network, v):
    """
    Smallest t such that the monitored voltages stay in their band from t to the end of the
    trajectory; horizon + 1 if the last state is out of the band.

    :param numpy.ndarray v: voltages of a trajectory, shape (horizon + 1, ..., n)
    """
    inside = in_band(network, v)
    # stays[t]: inside from t to the end
    stays = np.flip(np.logical_and.accumulate(np.flip(inside, axis=0), axis=0), axis=0)
    horizon = len(v) - 1
    first = np.argmax(stays, axis=0)
    return np.where(stays[-1], first, horizon + 1)


def run_batch(controller, config, problem, network, scenarios, discount=parameters.DISCOUNT, exploration=None):
    """
    Simulate several scenarios of the same horizon at once.

    :param callable controller: a controller law, or None for the configured variant
    :param gridvolt.controller.ControllerConfig config: the controller configuration
    :param gridvolt.steady_state.SteadyStateProblem problem: costs and bounds (its disturbance is replaced by the one of each scenario)
    :param gridvolt.network.Network network: the feeder
    :param list scenarios: the :class:`Scenario` objects
    :param float discount: discount factor, in (0, 1]
    :param callable exploration: optional function (t, q) -> perturbation of the nominal rate, before the filter

    :return: one (trajectory, metrics) pair per scenario
    :rtype: list
    """
    if not 0 < discount <= 1:
        raise InvalidConfig('the discount must lie in (0, 1], got {}'.format(discount))
    if not scenarios:
        return []
    horizons = {scenario.horizon for scenario in scenarios}
    if len(horizons) > 1:
        raise InvalidConfig('a batch needs scenarios of the same horizon, got {}'.format(sorted(horizons)))
    horizon = horizons.pop()
    v_env = np.stack([scenario.v_env for scenario in scenarios])
    q = np.stack([scenario.q0 for scenario in scenarios])
    if v_env.shape[1] != network.n:
        raise DimensionMismatch('the scenarios have {} buses, the network {}'.format(v_env.shape[1], network.n))
    if np.any(q < problem.q_lo) or np.any(q > problem.q_hi):
        raise InfeasibleState('an initial state lies outside the capacity box')

    monitored = network.controlled
    shape = (horizon + 1,) + q.shape
    vs, qs, xis = np.empty(shape), np.empty(shape), np.empty(shape)
    clipped = np.empty(shape[:2])
    v = voltage(network, q, v_env)
    for t in range(horizon + 1):
        perturbation = None if exploration is None else exploration(t, q)
        q_next, v_next, decision = _advance(controller, config, problem, network, v, q, v_env, perturbation)
        vs[t], qs[t], xis[t] = v, q, decision.xi
        clipped[t] = np.mean(decision.clipped[..., monitored], axis=-1) if monitored.any() else 0.
        q, v = q_next, v_next

    costs = step_cost(problem, vs, qs, v_env)
    weights = config.h * discount ** np.arange(horizon)
    transient = weights @ costs[:-1]
    recovery = recovery_time(network, vs)

    results = []
    for k, scenario in enumerate(scenarios):
        scenario_problem = problem.with_env(scenario.v_env)
        trajectory = Trajectory(np.arange(horizon + 1), vs[:, k], qs[:, k], xis[:, k], costs[:, k], clipped[:, k], scenario.v_env, config.h)
        metrics = EpisodeMetrics(int(recovery[k]), float(transient[k]), float(objective(scenario_problem, qs[-1, k])),
                                 bool(np.max(np.abs(xis[-1, k]), initial=0.) < parameters.CONVERGENCE_TOL),
                                 kkt_residual(scenario_problem, qs[-1, k]), float(np.mean(clipped[:-1, k] > 0)))
        if metrics.clipped_steps > parameters.CLIPPING_WARNING:
            logger.warning('Scenario %d: the filter was active on %.0f%% of the steps, alpha may be too small', scenario.seed, 100 * metrics.clipped_steps)
        results.append((trajectory, metrics))
    return results


def run_episode(controller, config, problem, network, scenario, discount=parameters.DISCOUNT):
    """
    Simulate one scenario.

    :return: the trajectory and its metrics
    :rtype: (Trajectory, EpisodeMetrics)
    """
    return run_batch(controller, config, problem, network, [scenario], discount)[0]


def generate_scenarios(network, kind, magnitude_range=parameters.DISTURBANCE_RANGE, count=parameters.N_SCENARIOS, seed=0, horizon=parameters.HORIZON):
    """
    Scenarios v_env = v_nom (1 + delta) (high voltage) or v_nom (1 - delta) (low voltage), with
    delta drawn uniformly in `magnitude_range` independently for every bus.

    :param gridvolt.network.Network network: the feeder
    :param kind: :class:`ScenarioKind` or its value ('high' or 'low')
    :param tuple magnitude_range: range of delta, inside (0, 0.5)
    :param int count: number of scenarios
    :param int seed: seed of the draw
    :param int horizon: number of steps of each scenario

    :return: the scenarios
    :rtype: list
    """
    kind = ScenarioKind(kind)
    low, high = magnitude_range
    if not 0 < low <= high < 0.5:
        raise InvalidConfig('the disturbance range must lie in (0, 0.5), got {}'.format(magnitude_range))
    rng = np.random.default_rng(seed)
    sign = 1. if kind is ScenarioKind.HIGH_VOLTAGE else -1.
    deltas = rng.uniform(low, high, (count, network.n))
    seeds = np.random.SeedSequence(seed).generate_state(count) if count else []
    return [Scenario(network.v_nom * (1. + sign * delta), None, horizon, int(scenario_seed)) for delta, scenario_seed in zip(deltas, seeds)]


def aggregate_metrics(metrics):
    """
    Means of the metrics of several episodes.

    :param list metrics: the :class:`EpisodeMetrics`

    :return: mean recovery time, transient cost, objective, KKT residual, and convergence rate
    :rtype: dict
    """
    return {'recovery_time': float(np.mean([m.recovery_time for m in metrics])),
            'transient_cost': float(np.mean([m.transient_cost for m in metrics])),
            'steady_state_objective': float(np.mean([m.steady_state_objective for m in metrics])),
            'final_kkt_residual': float(np.mean([m.final_kkt_residual for m in metrics])),
            'converged': float(np.mean([m.converged for m in metrics]))}


def worker_count():
    """Number of worker threads, from :data:`~gridvolt.parameters.THREADS_ENV_VAR` (default 1)."""
    value = os.environ.get(parameters.THREADS_ENV_VAR, '1')
    try:
        return max(1, int(value))
    except ValueError:
        raise InvalidConfig('{} must be an integer, got {!r}'.format(parameters.THREADS_ENV_VAR, value))


class Simulation(object):
    """The Simulation class permits to initialize and run a set of closed-loop episodes.
    """

    def __init__(self, delta_t=parameters.H, update_parameters=None, n_workers=None):

        #: The inputs of Grid-Volt.
        #:
        #: `inputs` is a dictionary:
        #:     {'network': :class:`~gridvolt.network.Network`,
        #:      'variant': :class:`~gridvolt.controller.Variant` or its value,
        #:      'policy': :class:`~gridvolt.policy.PolicyParams` or None,
        #:      'scenarios': list of :class:`Scenario`}
        self.inputs = {}

        #: The outputs of Grid-Volt.
        #:
        #: `outputs` is a dictionary:
        #:     {'trajectories': list of :class:`Trajectory`,
        #:      'metrics': list of :class:`EpisodeMetrics`}
        #: in the order of the input scenarios.
        self.outputs = {}

        #: the sampling period of the simulation
        self.delta_t = delta_t

        #: overrides of :mod:`gridvolt.parameters`, by parameter name (ALPHA, DISCOUNT); the module itself is left untouched
        self.parameters = {'ALPHA': parameters.ALPHA, 'DISCOUNT': parameters.DISCOUNT}
        if update_parameters:
            unknown = set(update_parameters) - set(self.parameters)
            if unknown:
                raise InvalidConfig('unknown parameters {}'.format(sorted(unknown)))
            self.parameters.update(update_parameters)

        #: number of worker threads
        self.n_workers = worker_count() if n_workers is None else n_workers

    def initialize(self, inputs):
        """
        Initialize :attr:`inputs` from `inputs`.

        :param dict inputs: must be a dictionary with the same structure as :attr:`inputs`.
        """
        missing = {'network', 'variant', 'scenarios'} - set(inputs)
        if missing:
            raise InvalidConfig('missing inputs {}'.format(sorted(missing)))
        self.inputs.clear()
        self.inputs.update(inputs)

    @property
    def config(self):
        return ControllerConfig(alpha=self.parameters['ALPHA'], h=self.delta_t, variant=Variant(self.inputs['variant']), policy=self.inputs.get('policy'))

    def run(self):
        """
        Run the simulation. Scenarios of equal horizon are simulated together, in chunks shared
        among the worker threads; the outputs do not depend on the number of workers.
        """
        network = self.inputs['network']
        scenarios = list(self.inputs['scenarios'])
        config = self.config
        if config.policy is not None:
            config.policy.check_network(network)
        problem = SteadyStateProblem.from_network(network, network.v_nom)

        chunks = []
        for horizon in sorted({scenario.horizon for scenario in scenarios}):
            positions = [k for k, scenario in enumerate(scenarios) if scenario.horizon == horizon]
            size = max(1, -(-len(positions) // self.n_workers))
            chunks.extend(positions[start:start + size] for start in range(0, len(positions), size))

        def run_chunk(positions):
            return run_batch(None, config, problem, network, [scenarios[k] for k in positions], self.parameters['DISCOUNT'])

        if self.n_workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=self.n_workers) as executor:
                chunk_results = list(executor.map(run_chunk, chunks))
        else:
            chunk_results = [run_chunk(chunk) for chunk in chunks]

        results = [None] * len(scenarios)
        for positions, chunk_result in zip(chunks, chunk_results):
            for k, result in zip(positions, chunk_result):
                results[k] = result
        self.outputs['trajectories'] = [trajectory for trajectory, _ in results]
        self.outputs['metrics'] = [metrics for _, metrics in results]
        logger.info('Simulated %d episodes with the %s controller', len(scenarios), config.variant.value)
