# -*- coding: utf-8 -*-
"""
    gridvolt.training
    ~~~~~~~~~~~~~~~~~

    The module :mod:`gridvolt.training` optimizes the parameters of the transient policy
    so as to reduce the discounted transient cost. Every interaction with the feeder goes
    through the safe controller, so that any parameter value met during training is safe.

    Two trainers are provided:

    * :class:`ZerothOrderTrainer`: antithetic random search in the space of the unconstrained
      parameters, each bus following the gradient estimate of its own cost,
    * :class:`ActorCriticTrainer`: one replay buffer and one critic per bus, the critic being
      regressed on one-step targets and the actor following the deterministic policy gradient
      through the safety filter.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import torch

from gridvolt import parameters
from gridvolt.controller import Variant, control
from gridvolt.errors import InvalidConfig, NonFiniteLoss
from gridvolt.policy import init_policy, policy_gradient
from gridvolt.simulation import bus_costs, generate_scenarios, run_batch, worker_count

logger = logging.getLogger(__name__)


class Method(enum.Enum):
    ACTOR_CRITIC = 'ac'
    ZEROTH_ORDER = 'zo'


@dataclass(frozen=True)
class TrainerConfig:
    method: Method = Method.ZEROTH_ORDER
    episodes: int = parameters.TRAINING_EPISODES               #: number of episodes N_ep
    steps: int = parameters.TRAINING_STEPS                     #: steps per episode N_step
    batch_size: int = parameters.BATCH_SIZE
    actor_step: float = parameters.ACTOR_STEP
    critic_step: float = parameters.CRITIC_STEP
    critic_width: int = parameters.CRITIC_WIDTH
    buffer_capacity: int = parameters.BUFFER_CAPACITY
    exploration_noise: float = parameters.EXPLORATION_NOISE
    perturbation_scale: float = parameters.PERTURBATION_SCALE
    zo_step: float = parameters.ZO_STEP
    directions: int = parameters.ZO_DIRECTIONS
    scenario_batch: int = parameters.SCENARIO_BATCH
    discount: float = parameters.DISCOUNT
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'method', Method(self.method))
        for name in ('actor_step', 'critic_step', 'perturbation_scale', 'zo_step'):
            if not getattr(self, name) > 0:
                raise InvalidConfig('{} must be positive, got {}'.format(name, getattr(self, name)))
        if self.episodes < 0 or self.steps < 1:
            raise InvalidConfig('training needs episodes >= 0 and steps >= 1')
        for name in ('batch_size', 'critic_width', 'buffer_capacity', 'directions', 'scenario_batch'):
            if getattr(self, name) < 1:
                raise InvalidConfig('{} must be at least 1'.format(name))
        if self.exploration_noise < 0:
            raise InvalidConfig('the exploration noise must be non-negative')
        if not 0 < self.discount <= 1:
            raise InvalidConfig('the discount must lie in (0, 1], got {}'.format(self.discount))


@dataclass
class TrainingResult:
    policy: object                     #: the trained :class:`~gridvolt.policy.PolicyParams`
    log: list = field(default_factory=list)  #: one dict (episode, transient_cost, clipped_fraction) per episode
    held_out_success: float = 0.       #: fraction of the held-out scenarios improved on the initial policy
    training_ineffective: bool = False


class ReplayBuffer(object):
    """
    FIFO store of the transitions (v_i, q_i, f_i, reward, v_i_next, q_i_next) of one bus.

    :param int capacity: maximal number of transitions
    """

    FIELDS = ('v', 'q', 'f', 'reward', 'v_next', 'q_next')

    def __init__(self, capacity=parameters.BUFFER_CAPACITY):
        if capacity < 1:
            raise InvalidConfig('the capacity must be at least 1')
        self.capacity = capacity
        self._data = np.empty((capacity, len(self.FIELDS)))
        self._size = 0
        self._next = 0

    def __len__(self):
        return self._size

    def add(self, v, q, f, reward, v_next, q_next):
        """Append transitions; arguments are scalars or equal-length vectors."""
        rows = np.column_stack(np.broadcast_arrays(*(np.atleast_1d(np.asarray(value, dtype=float)) for value in (v, q, f, reward, v_next, q_next))))
        if len(rows) > self.capacity:
            rows = rows[-self.capacity:]
        positions = (self._next + np.arange(len(rows))) % self.capacity
        self._data[positions] = rows
        self._next = (self._next + len(rows)) % self.capacity
        self._size = min(self.capacity, self._size + len(rows))

    def sample(self, batch_size, rng):
        """
        Uniform draw with replacement.

        :return: dict of arrays, one per field
        :rtype: dict
        """
        if not self._size:
            raise InvalidConfig('cannot sample an empty buffer')
        rows = self._data[rng.integers(self._size, size=batch_size)]
        return dict(zip(self.FIELDS, rows.T))

    def contents(self):
        """Stored transitions, oldest first."""
        start = self._next if self._size == self.capacity else 0
        rows = np.roll(self._data[:self._size], -start, axis=0)
        return dict(zip(self.FIELDS, rows.T))


# -- critic

def init_critic(width=parameters.CRITIC_WIDTH, seed=0, scale=5.):
    """
    Critic with random hidden weights and zero output layer: its output is 0 everywhere.

    :return: a network mapping the inputs (v - v_nom, q, f) to the action value
    :rtype: torch.nn.Sequential
    """
    generator = torch.Generator().manual_seed(seed)
    critic = torch.nn.Sequential(torch.nn.Linear(3, width, dtype=torch.float64), torch.nn.Tanh(),
                                 torch.nn.Linear(width, 1, dtype=torch.float64))
    with torch.no_grad():
        critic[0].weight.normal_(0., scale, generator=generator)
        critic[0].bias.normal_(0., 1., generator=generator)
        critic[2].weight.zero_()
        critic[2].bias.zero_()
    return critic


def _critic_inputs(v, q, f):
    v, q, f = np.broadcast_arrays(*(np.asarray(value, dtype=float) for value in (v, q, f)))
    return torch.as_tensor(np.stack([v - parameters.V_NOM, q, f], axis=-1))


def critic_eval(critic, v, q, f):
    """
    Action-value estimate of a bus.

    :param torch.nn.Module critic: the critic
    :param v: squared voltage of the bus (p.u.)
    :param q: reactive injection (p.u.)
    :param f: reactive power rate (p.u. step-1)

    :rtype: numpy.ndarray
    """
    with torch.no_grad():
        return critic(_critic_inputs(v, q, f)).squeeze(-1).numpy()


def critic_gradient(critic, v, q, f):
    """
    Value of the critic and its derivatives with respect to its inputs.

    :return: the value and a dict of derivatives with keys v, q and f, each carrying the leading
        dimensions of the inputs
    :rtype: (numpy.ndarray, dict)
    """
    inputs = _critic_inputs(v, q, f).requires_grad_(True)
    value = critic(inputs).squeeze(-1)
    d_inputs, = torch.autograd.grad(value.sum(), inputs)
    d_inputs = d_inputs.numpy()
    return value.detach().numpy(), {'v': d_inputs[..., 0], 'q': d_inputs[..., 1], 'f': d_inputs[..., 2]}


def fit_critic(critic, optimizer, v, q, f, targets):
    """
    One optimizer step on the mean squared error of the critic against `targets`.

    :param torch.optim.Optimizer optimizer: optimizer of the critic parameters
    :return: the loss before the step
    :rtype: float
    """
    value = critic(_critic_inputs(v, q, f)).squeeze(-1)
    loss = torch.nn.functional.mse_loss(value, torch.as_tensor(np.asarray(targets, dtype=float)))
    if not torch.isfinite(loss):
        raise NonFiniteLoss('the critic loss is not finite')
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss)


# -- rollouts

def bus_transient_costs(results, problem, discount):
    """
    Discounted transient cost of every bus, averaged over episodes.

    :param list results: (trajectory, metrics) pairs of :func:`~gridvolt.simulation.run_batch`
    :return: vector of length n
    :rtype: numpy.ndarray
    """
    totals = []
    for trajectory, _ in results:
        costs = bus_costs(problem, trajectory.v[:-1], trajectory.q[:-1], trajectory.v_env)
        weights = trajectory.h * discount ** np.arange(len(costs))
        totals.append(weights @ costs)
    return np.mean(totals, axis=0)


def _policy_costs(controller_config, problem, network, scenarios, discount, policy):
    config = controller_config.replace(variant=Variant.TASRL, policy=policy)
    results = run_batch(None, config, problem, network, scenarios, discount)
    positions = [network.index(bus_id) for bus_id in policy.bus_ids]
    clipped = float(np.mean([metrics.clipped_steps for _, metrics in results]))
    return bus_transient_costs(results, problem, discount)[positions], clipped


def zeroth_order_update(params, objective, scale, step, seed, directions=parameters.ZO_DIRECTIONS, n_workers=1):
    """
    One step of antithetic random search on the unconstrained parameters.

    For every direction delta, the costs J(theta + scale delta) and J(theta - scale delta) are
    evaluated; bus i moves its own parameters along the estimate
    mean((J_i(+) - J_i(-)) delta_i) / sigma_i, sigma_i being the standard deviation of the 2 x
    directions costs of bus i. The step is thus independent of the scale of the costs; a bus whose
    costs are all equal does not move.

    :param gridvolt.policy.PolicyParams params: the current policy
    :param callable objective: function of a policy returning the cost of each bus (vector of length m) or a common cost
    :param float scale: standard deviation of the perturbations
    :param float step: step size
    :param int seed: seed of the directions
    :param int directions: number of antithetic pairs
    :param int n_workers: number of threads evaluating the perturbed policies

    :return: the updated policy and the mean of the evaluated costs
    :rtype: (gridvolt.policy.PolicyParams, float)

    :raises NonFiniteLoss: if an evaluated cost is not finite
    """
    if not scale > 0:
        raise InvalidConfig('the perturbation scale must be positive, got {}'.format(scale))
    theta = params.to_matrix()
    deltas = np.random.default_rng(seed).standard_normal((directions,) + theta.shape)
    candidates = [params.from_matrix(theta + sign * scale * delta) for delta in deltas for sign in (1., -1.)]
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as executor:
            costs = list(executor.map(objective, candidates))
    else:
        costs = [objective(candidate) for candidate in candidates]
    costs = np.array([np.broadcast_to(np.asarray(cost, dtype=float), (params.m,)) for cost in costs])
    if not np.all(np.isfinite(costs)):
        raise NonFiniteLoss('a perturbed policy has a non-finite cost', checkpoint=params)
    differences = costs[0::2] - costs[1::2]  # (directions, m)
    spread = np.std(costs, axis=0)[:, np.newaxis]
    estimate = np.mean(differences[:, :, np.newaxis] * deltas, axis=0)
    estimate = np.divide(estimate, spread, out=np.zeros_like(estimate), where=spread > 0)
    return params.from_matrix(theta - step * estimate), float(np.mean(costs))


class ZerothOrderTrainer(object):
    """Random-search trainer; one update per episode on a fresh batch of scenarios."""

    def __init__(self, config, controller_config, problem, network, n_workers=1):
        self.config = config
        self.controller_config = controller_config
        self.problem = problem
        self.network = network
        self.n_workers = n_workers

    def run_episode(self, episode, policy, scenarios):
        config = self.config

        def objective(candidate):
            return _policy_costs(self.controller_config, self.problem, self.network, scenarios, config.discount, candidate)[0]

        seed = np.random.SeedSequence([config.seed, episode]).generate_state(1)[0]
        policy, _ = zeroth_order_update(policy, objective, config.perturbation_scale, config.zo_step, seed, config.directions, self.n_workers)
        costs, clipped = _policy_costs(self.controller_config, self.problem, self.network, scenarios, config.discount, policy)
        return policy, float(np.sum(costs)), clipped


class ActorCriticTrainer(object):
    """
    Per-bus actor-critic trainer. Bus i only reads its own buffer and critic; the critic target
    is -c_i + discount Q_i(v_i', q_i', f_i'), with f_i' the filtered action of the current policy.
    No target networks are used. The critics are fitted with Adam.
    """

    def __init__(self, config, controller_config, problem, network):
        self.config = config
        self.controller_config = controller_config
        self.problem = problem
        self.network = network
        self.positions = [network.index(bus_id) for bus_id in network.controlled_ids]
        self.buffers = [ReplayBuffer(config.buffer_capacity) for _ in self.positions]
        self.critics = [init_critic(config.critic_width, seed=config.seed + k) for k in range(len(self.positions))]
        self.optimizers = [torch.optim.Adam(critic.parameters(), lr=config.critic_step) for critic in self.critics]
        self.rng = np.random.default_rng(config.seed)

    def _local_action(self, config, k, v_i, q_i):
        """Filtered action of bus k, computed from its own measurements only."""
        position = self.positions[k]
        v = np.tile(self.network.v_nom, (len(v_i), 1))
        q = np.zeros_like(v)
        v[:, position] = v_i
        q[:, position] = q_i
        decision = control(config, self.problem, v, q)
        return decision.xi[:, position], ~decision.clipped[:, position], v, q

    def update_bus(self, k, policy):
        """One critic step and the actor gradient of bus k; returns the gradient of its parameter row."""
        config = self.config
        batch = self.buffers[k].sample(config.batch_size, self.rng)
        controller = self.controller_config.replace(variant=Variant.TASRL, policy=policy)

        f_next, _, _, _ = self._local_action(controller, k, batch['v_next'], batch['q_next'])
        targets = batch['reward'] + config.discount * critic_eval(self.critics[k], batch['v_next'], batch['q_next'], f_next)
        fit_critic(self.critics[k], self.optimizers[k], batch['v'], batch['q'], batch['f'], targets)

        f, free, v, q = self._local_action(controller, k, batch['v'], batch['q'])
        _, grads = critic_gradient(self.critics[k], batch['v'], batch['q'], f)
        d_policy = policy_gradient(policy, self.network, controller.alpha, v, q)[:, k, :]
        gradient = np.mean((grads['f'] * free)[:, np.newaxis] * d_policy, axis=0)
        if not np.all(np.isfinite(gradient)):
            raise NonFiniteLoss('the actor gradient of bus {} is not finite'.format(policy.bus_ids[k]), checkpoint=policy)
        return gradient

    def run_episode(self, episode, policy, scenarios):
        config = self.config
        controller = self.controller_config.replace(variant=Variant.TASRL, policy=policy)
        spread = config.exploration_noise * controller.alpha * (self.problem.q_hi - self.problem.q_lo)

        def exploration(t, q):
            return self.rng.normal(0., 1., np.shape(q)) * spread

        results = run_batch(None, controller, self.problem, self.network, scenarios, config.discount, exploration)
        for trajectory, _ in results:
            rewards = -bus_costs(self.problem, trajectory.v, trajectory.q, trajectory.v_env)
            for k, position in enumerate(self.positions):
                self.buffers[k].add(trajectory.v[:-1, position], trajectory.q[:-1, position], trajectory.xi[:-1, position],
                                    rewards[:-1, position], trajectory.v[1:, position], trajectory.q[1:, position])

        theta = policy.to_matrix()
        for _ in range(config.steps):
            ascent = np.stack([self.update_bus(k, policy) for k in range(len(self.positions))])
            theta = theta + config.actor_step * ascent
            policy = policy.from_matrix(theta)

        costs, clipped = _policy_costs(self.controller_config, self.problem, self.network, scenarios, config.discount, policy)
        return policy, float(np.sum(costs)), clipped


def default_sampler(network, horizon, magnitude_range=parameters.DISTURBANCE_RANGE):
    """
    Scenario sampler drawing high- and low-voltage disturbances with equal probability.

    :return: function (rng, count) -> list of scenarios
    :rtype: callable
    """
    def sample(rng, count):
        kind = 'high' if rng.random() < 0.5 else 'low'
        return generate_scenarios(network, kind, magnitude_range, count, int(rng.integers(2 ** 31)), horizon)
    return sample


def held_out_evaluation(policy, initial, controller_config, problem, network, scenarios, discount=parameters.DISCOUNT):
    """
    Fraction of `scenarios` whose transient cost under `policy` is strictly below the one under
    `initial`.

    :rtype: float
    """
    if not scenarios:
        return 0.
    costs = []
    for candidate in (policy, initial):
        config = controller_config.replace(variant=Variant.TASRL, policy=candidate)
        costs.append(np.array([metrics.transient_cost for _, metrics in run_batch(None, config, problem, network, scenarios, discount)]))
    return float(np.mean(costs[0] < costs[1]))


def train(config, controller_config, problem, network, scenario_sampler=None, initial=None, held_out=None, n_workers=None):
    """
    Train the transient policy.

    :param TrainerConfig config: the trainer configuration
    :param gridvolt.controller.ControllerConfig controller_config: alpha and h of the controller
    :param gridvolt.steady_state.SteadyStateProblem problem: costs and bounds
    :param gridvolt.network.Network network: the feeder
    :param callable scenario_sampler: function (rng, count) -> scenarios; defaults to :func:`default_sampler`
    :param gridvolt.policy.PolicyParams initial: starting policy, defaults to :func:`~gridvolt.policy.init_policy`
    :param list held_out: scenarios of the final check; defaults to
        :data:`~gridvolt.parameters.HELD_OUT_SCENARIOS` high-voltage scenarios
    :param int n_workers: threads of the zeroth-order evaluations

    :return: the result, whose policy is the last finite one
    :rtype: TrainingResult

    :raises NonFiniteLoss: if a cost or gradient becomes non-finite; the error carries the last finite policy
    """
    if initial is None:
        initial = init_policy(network)
    initial.check_network(network)
    if scenario_sampler is None:
        scenario_sampler = default_sampler(network, config.steps)
    if held_out is None:
        held_out = generate_scenarios(network, 'high', count=parameters.HELD_OUT_SCENARIOS, seed=config.seed + 1, horizon=config.steps)
    n_workers = worker_count() if n_workers is None else n_workers

    if config.method is Method.ZEROTH_ORDER:
        trainer = ZerothOrderTrainer(config, controller_config, problem, network, n_workers)
    else:
        trainer = ActorCriticTrainer(config, controller_config, problem, network)
    rng = np.random.default_rng(config.seed)
    policy = initial
    log = []
    for episode in range(config.episodes):
        scenarios = scenario_sampler(rng, config.scenario_batch)
        try:
            updated, cost, clipped = trainer.run_episode(episode, policy, scenarios)
        except NonFiniteLoss as error:
            error.checkpoint = policy
            raise
        if not np.isfinite(cost):
            raise NonFiniteLoss('episode {}: the transient cost is not finite'.format(episode), checkpoint=policy)
        policy = updated
        log.append({'episode': episode, 'transient_cost': cost, 'clipped_fraction': clipped})
        if episode % 10 == 0:
            logger.info('Episode %d: transient cost %g, clipped fraction %.3f', episode, cost, clipped)

    success = held_out_evaluation(policy, initial, controller_config, problem, network, held_out, config.discount)
    result = TrainingResult(policy, log, success, success < parameters.HELD_OUT_SUCCESS)
    if result.training_ineffective:
        logger.warning('Training improved %.0f%% of the held-out scenarios, below %.0f%%', 100 * success, 100 * parameters.HELD_OUT_SUCCESS)
    return result
