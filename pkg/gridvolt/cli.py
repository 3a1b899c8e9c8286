# -*- coding: utf-8 -*-
"""
    gridvolt.cli
    ~~~~~~~~~~~~

    The module :mod:`gridvolt.cli` is the command line of Grid-Volt::

        gridvolt [--log-level LEVEL] COMMAND [options]

    with the commands ``simulate``, ``train``, ``benchmark``, ``verify-stability``,
    ``solve-steady-state``, ``alpha-sweep`` and ``export-feeder``. The network option accepts
    a network file or the name of a shipped feeder (``ieee13``, ``ieee123``). The option ``--out``
    is the output directory of every command but ``train``, where it is the checkpoint to write.

    Exit statuses: 0 success, 1 usage or configuration error, 2 broken invariant (including
    safety and failed certificates), 3 numerical failure. The environment variable
    ``GRIDVOLT_NUM_THREADS`` sets the number of worker threads.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import argparse
import hashlib
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from gridvolt import __version__, converter, feeders, parameters
from gridvolt.controller import ControllerConfig, Variant
from gridvolt.errors import GridVoltError, InvalidConfig, InvariantViolation, NumericalFailure
from gridvolt.policy import init_policy
from gridvolt.simulation import Simulation, aggregate_metrics, generate_scenarios, worker_count
from gridvolt.stability import certify
from gridvolt.steady_state import SteadyStateProblem, projected_gradient_solve, qp_oracle
from gridvolt.training import Method, TrainerConfig, train

logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2
EXIT_NUMERICAL = 3

#: the columns of the benchmark report
BENCHMARK_COLUMNS = ['variant', 'recovery_time', 'transient_cost', 'steady_state_objective', 'converged', 'scenarios', 'kind', 'seed', 'scenario_hash']

#: benchmark rows, in report order
BENCHMARK_VARIANTS = [Variant.TASRL, Variant.SAFE_GRADIENT_FLOW, Variant.TRANSIENT_ONLY]
#: checkpoint written by `train` when --out is a directory or omitted
TRAINED_POLICY = 'policy.json'


class UsageError(GridVoltError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Hyperparameters and paths of a command."""
    network: str = 'ieee13'
    variant: Variant = Variant.TASRL
    checkpoint: Optional[str] = None
    kind: str = 'high'
    count: int = parameters.N_SCENARIOS
    seed: int = 0
    alpha: float = parameters.ALPHA
    h: float = parameters.H
    c: float = parameters.C_FRACTION
    epsilon: float = parameters.EPSILON
    gamma: float = parameters.DISCOUNT
    horizon: int = parameters.HORIZON
    out: str = '.'

    def __post_init__(self):
        object.__setattr__(self, 'variant', Variant(self.variant))
        if self.kind not in ('high', 'low'):
            raise InvalidConfig('kind must be high or low, got {!r}'.format(self.kind))
        if self.count < 1 or self.horizon < 1:
            raise InvalidConfig('--scenarios and --horizon must be at least 1')
        if not 0 < self.gamma <= 1:
            raise InvalidConfig('gamma must lie in (0, 1], got {}'.format(self.gamma))
        # h alpha <= 1 and positivity
        ControllerConfig(self.alpha, self.h, Variant.SAFE_GRADIENT_FLOW)
        if self.checkpoint is not None and not os.path.isfile(self.checkpoint):
            raise UsageError('checkpoint {} does not exist'.format(self.checkpoint))
        if self.network not in feeders.FEEDERS and not os.path.isfile(self.network):
            raise UsageError('network {} is neither a file nor a shipped feeder {}'.format(self.network, sorted(feeders.FEEDERS)))

    @classmethod
    def from_args(cls, args):
        names = [name for name in cls.__dataclass_fields__ if hasattr(args, name)]
        return cls(**{name: getattr(args, name) for name in names})

    def load_network(self):
        if os.path.isfile(self.network):
            return converter.load_network(self.network)
        return feeders.FEEDERS[self.network]()

    def load_policy(self, network):
        """Policy of the checkpoint, or the initial policy if no checkpoint was given."""
        if self.checkpoint is None:
            logger.warning('No checkpoint given: using the initial policy')
            return init_policy(network, c=self.c, epsilon=self.epsilon)
        return converter.load_checkpoint(self.checkpoint, network)

    def controller(self, variant, policy=None):
        return ControllerConfig(self.alpha, self.h, variant, policy)

    def scenarios(self, network):
        return generate_scenarios(network, self.kind, count=self.count, seed=self.seed, horizon=self.horizon)


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)  #: one dict per variant, keys :data:`BENCHMARK_COLUMNS`
    scenario_hash: str = ''
    count: int = 0
    kind: str = 'high'
    seed: int = 0

    def to_dataframe(self):
        return pd.DataFrame(self.rows, columns=BENCHMARK_COLUMNS)


def scenario_hash(scenarios):
    """SHA-256 of the disturbances, initial states and horizons of `scenarios`."""
    digest = hashlib.sha256()
    for scenario in scenarios:
        digest.update(np.ascontiguousarray(scenario.v_env, dtype='<f8').tobytes())
        digest.update(np.ascontiguousarray(scenario.q0, dtype='<f8').tobytes())
        digest.update(int(scenario.horizon).to_bytes(8, 'little'))
    return digest.hexdigest()


def _simulate(config, network, variant, policy, scenarios, alpha=None):
    simulation = Simulation(delta_t=config.h, update_parameters={'ALPHA': config.alpha if alpha is None else alpha, 'DISCOUNT': config.gamma})
    simulation.initialize({'network': network, 'variant': variant, 'policy': policy, 'scenarios': scenarios})
    simulation.run()
    return simulation.outputs


def _output_dir(config):
    os.makedirs(config.out, exist_ok=True)
    return config.out


def _print_table(dataframe):
    print(dataframe.to_string(index=False, float_format=lambda value: '{:.6g}'.format(value)))


def cmd_simulate(config):
    """
    Simulate the configured controller on generated scenarios; write one trajectory file per
    episode and the metrics of all episodes.

    :return: the outputs of :class:`~gridvolt.simulation.Simulation`
    :rtype: dict
    """
    network = config.load_network()
    policy = None if config.variant is Variant.SAFE_GRADIENT_FLOW else config.load_policy(network)
    outputs = _simulate(config, network, config.variant, policy, config.scenarios(network))
    out = _output_dir(config)
    for episode, trajectory in enumerate(outputs['trajectories']):
        converter.to_csv(converter.trajectory_to_dataframe(trajectory), os.path.join(out, 'trajectory_{:04d}.csv'.format(episode)))
    converter.to_csv(converter.metrics_to_dataframe(outputs['metrics']), os.path.join(out, 'metrics.csv'))
    summary = aggregate_metrics(outputs['metrics'])
    _print_table(pd.DataFrame([summary]))
    logger.info('Wrote %d trajectories to %s', len(outputs['trajectories']), out)
    return outputs


def cmd_train(config, method=Method.ZEROTH_ORDER, episodes=parameters.TRAINING_EPISODES, steps=parameters.TRAINING_STEPS,
              log_out=None, run_certificate=False):
    """
    Train a policy and write its checkpoint to `config.out` (`policy.json` inside it if it is a
    directory) and its training log next to the checkpoint.

    :return: the training result
    :rtype: gridvolt.training.TrainingResult
    """
    network = config.load_network()
    problem = SteadyStateProblem.from_network(network, network.v_nom)
    trainer_config = TrainerConfig(method=method, episodes=episodes, steps=steps, discount=config.gamma, seed=config.seed)
    initial = config.load_policy(network) if config.checkpoint else init_policy(network, c=config.c, epsilon=config.epsilon)
    result = train(trainer_config, config.controller(Variant.SAFE_GRADIENT_FLOW), problem, network, initial=initial)
    metadata = {'method': trainer_config.method.value, 'episodes': episodes, 'steps': steps, 'seed': config.seed,
                'held_out_success': result.held_out_success, 'training_ineffective': result.training_ineffective}
    if run_certificate:
        report = certify(config.controller(Variant.TASRL, result.policy), problem, config.scenarios(network), seed=config.seed)
        metadata['certificate'] = dict(vars(report), passed=report.passed)
    checkpoint_out = os.path.join(config.out, TRAINED_POLICY) if os.path.isdir(config.out) else config.out
    if os.path.dirname(checkpoint_out):
        os.makedirs(os.path.dirname(checkpoint_out), exist_ok=True)
    converter.save_checkpoint(result.policy, checkpoint_out, metadata)
    if log_out is None:
        log_out = os.path.splitext(checkpoint_out)[0] + '_log.csv'
    converter.to_csv(converter.training_log_to_dataframe(result.log), log_out)
    logger.info('Wrote checkpoint %s and training log %s', checkpoint_out, log_out)
    return result


def cmd_benchmark(config):
    """
    Run the three controllers on the same scenarios; write the report and the metrics of every
    variant. Metrics of the variants already run are written before an error is propagated.

    :rtype: BenchmarkReport
    """
    network = config.load_network()
    policy = config.load_policy(network)
    scenarios = config.scenarios(network)
    report = BenchmarkReport(scenario_hash=scenario_hash(scenarios), count=len(scenarios), kind=config.kind, seed=config.seed)
    out = _output_dir(config)
    try:
        for variant in BENCHMARK_VARIANTS:
            outputs = _simulate(config, network, variant, None if variant is Variant.SAFE_GRADIENT_FLOW else policy, scenarios)
            converter.to_csv(converter.metrics_to_dataframe(outputs['metrics']), os.path.join(out, 'metrics_{}.csv'.format(variant.value)))
            summary = aggregate_metrics(outputs['metrics'])
            report.rows.append({'variant': variant.value, 'recovery_time': summary['recovery_time'], 'transient_cost': summary['transient_cost'],
                                'steady_state_objective': summary['steady_state_objective'], 'converged': summary['converged'],
                                'scenarios': report.count, 'kind': report.kind, 'seed': report.seed, 'scenario_hash': report.scenario_hash})
    finally:
        converter.to_csv(report.to_dataframe(), os.path.join(out, 'benchmark.csv'))
    _print_table(report.to_dataframe().drop(columns=['scenario_hash']))
    return report


def cmd_verify_stability(config, n_samples=parameters.N_CERT_SAMPLES):
    """
    Certify the policy of the checkpoint on sampled states and trajectories.

    :rtype: gridvolt.stability.CertificateReport
    """
    network = config.load_network()
    policy = config.load_policy(network)
    problem = SteadyStateProblem.from_network(network, network.v_nom)
    report = certify(config.controller(Variant.TASRL, policy), problem, config.scenarios(network), n_samples, config.seed)
    for name, value in vars(report).items():
        print('{}: {}'.format(name, value))
    print('passed: {}'.format(report.passed))
    return report


def cmd_solve_steady_state(config, oracle=False):
    """
    Solve the steady-state problem of every generated scenario; write q*, v* and the solver
    statistics.

    :rtype: pandas.DataFrame
    """
    network = config.load_network()
    problem = SteadyStateProblem.from_network(network, network.v_nom)
    rows = []
    for episode, scenario in enumerate(config.scenarios(network)):
        scenario_problem = problem.with_env(scenario.v_env)
        report = qp_oracle(scenario_problem) if oracle else projected_gradient_solve(scenario_problem)
        row = {'episode': episode, 'objective': report.objective, 'iterations': report.iterations, 'residual': report.residual}
        row.update({'q_{}'.format(k + 1): value for k, value in enumerate(report.q_star)})
        row.update({'v_{}'.format(k + 1): value for k, value in enumerate(report.v_star)})
        rows.append(row)
    dataframe = pd.DataFrame(rows)
    converter.to_csv(dataframe, os.path.join(_output_dir(config), 'steady_state.csv'))
    _print_table(dataframe[['episode', 'objective', 'iterations', 'residual']])
    return dataframe


def cmd_alpha_sweep(config, alphas):
    """
    Simulate the first generated scenario once per alpha; write one trajectory file per alpha.

    :return: the trajectory of each alpha
    :rtype: dict

    :raises InvalidAlpha: if h alpha > 1 for some alpha
    """
    network = config.load_network()
    for alpha in alphas:
        ControllerConfig(alpha, config.h, Variant.SAFE_GRADIENT_FLOW)
    policy = None if config.variant is Variant.SAFE_GRADIENT_FLOW else config.load_policy(network)
    scenario = config.scenarios(network)[:1]
    out = _output_dir(config)
    trajectories = {}
    for alpha in alphas:
        trajectory = _simulate(config, network, config.variant, policy, scenario, alpha)['trajectories'][0]
        trajectories[alpha] = trajectory
        converter.to_csv(converter.trajectory_to_dataframe(trajectory), os.path.join(out, 'alpha_{:g}.csv'.format(alpha)))
    return trajectories


def cmd_export_feeder(name, path):
    """Write a shipped feeder as a network file."""
    converter.save_network(feeders.FEEDERS[name](), path)
    return path


class ArgumentParser(argparse.ArgumentParser):
    """Argument parser exiting with :data:`EXIT_USAGE` on errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, '{}: error: {}\n'.format(self.prog, message))


def _run_options(parser, variant=True, out=True):
    parser.add_argument('--network', default='ieee13', help='network file or shipped feeder name (default: %(default)s)')
    if variant:
        parser.add_argument('--controller', dest='variant', default='tasrl', choices=[v.value for v in Variant], help='controller variant (default: %(default)s)')
    parser.add_argument('--checkpoint', help='policy checkpoint (default: initial policy)')
    parser.add_argument('--scenarios', dest='count', type=int, default=parameters.N_SCENARIOS, help='number of scenarios (default: %(default)s)')
    parser.add_argument('--kind', default='high', choices=['high', 'low'], help='disturbance kind (default: %(default)s)')
    parser.add_argument('--seed', type=int, default=0, help='seed of the scenarios and of training (default: %(default)s)')
    parser.add_argument('--alpha', type=float, default=parameters.ALPHA, help='barrier gain (default: %(default)s)')
    parser.add_argument('--h', type=float, default=parameters.H, help='sampling period (default: %(default)s)')
    parser.add_argument('--c', type=float, default=parameters.C_FRACTION, help='output-bound fraction of a new policy (default: %(default)s)')
    parser.add_argument('--epsilon', type=float, default=parameters.EPSILON, help='capacity margin of a new policy (default: %(default)s)')
    parser.add_argument('--gamma', type=float, default=parameters.DISCOUNT, help='discount factor (default: %(default)s)')
    parser.add_argument('--horizon', type=int, default=parameters.HORIZON, help='steps per episode (default: %(default)s)')
    if out:
        parser.add_argument('--out', default='.', help='output directory (default: %(default)s)')


def build_parser():
    parser = ArgumentParser(prog='gridvolt', description='Safe and stable volt-var control on radial feeders.')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    parser.add_argument('--log-level', default='WARNING', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='logging level (default: %(default)s)')
    commands = parser.add_subparsers(dest='command', metavar='COMMAND', parser_class=ArgumentParser)
    commands.required = True

    simulate = commands.add_parser('simulate', help='simulate a controller on generated scenarios')
    _run_options(simulate)

    training = commands.add_parser('train', help='train a transient policy')
    _run_options(training, variant=False, out=False)
    training.add_argument('--method', default='zo', choices=[m.value for m in Method], help='trainer (default: %(default)s)')
    training.add_argument('--episodes', type=int, default=parameters.TRAINING_EPISODES, help='training episodes (default: %(default)s)')
    training.add_argument('--steps', type=int, default=parameters.TRAINING_STEPS, help='steps per training episode (default: %(default)s)')
    training.add_argument('--out', default=TRAINED_POLICY, help='checkpoint to write (default: %(default)s)')
    training.add_argument('--log', dest='log_out', help='training log to write (default: next to the checkpoint)')
    training.add_argument('--certify', action='store_true', help='attach a stability certificate to the checkpoint')

    benchmark = commands.add_parser('benchmark', help='compare the three controllers on the same scenarios')
    _run_options(benchmark, variant=False)

    verify = commands.add_parser('verify-stability', help='certify the stability of a policy')
    _run_options(verify, variant=False)
    verify.add_argument('--samples', type=int, default=parameters.N_CERT_SAMPLES, help='sampled states (default: %(default)s)')

    solve = commands.add_parser('solve-steady-state', help='solve the steady-state problem of generated scenarios')
    _run_options(solve, variant=False)
    solve.add_argument('--oracle', action='store_true', help='use the exhaustive active-set oracle')

    sweep = commands.add_parser('alpha-sweep', help='simulate one scenario for several barrier gains')
    _run_options(sweep)
    sweep.add_argument('--alphas', type=float, nargs='+', required=True, help='barrier gains')

    export = commands.add_parser('export-feeder', help='write a shipped feeder as a network file')
    export.add_argument('feeder', choices=sorted(feeders.FEEDERS))
    export.add_argument('path')
    return parser


def run(args):
    """Dispatch parsed arguments; return the exit status."""
    if args.command == 'export-feeder':
        cmd_export_feeder(args.feeder, args.path)
        return EXIT_SUCCESS
    config = RunConfig.from_args(args)
    if args.command == 'simulate':
        cmd_simulate(config)
    elif args.command == 'train':
        result = cmd_train(config, Method(args.method), args.episodes, args.steps, args.log_out, args.certify)
        if result.training_ineffective:
            logger.warning('The checkpoint is flagged as training ineffective')
    elif args.command == 'benchmark':
        cmd_benchmark(config)
    elif args.command == 'verify-stability':
        if not cmd_verify_stability(config, args.samples).passed:
            return EXIT_INVARIANT
    elif args.command == 'solve-steady-state':
        cmd_solve_steady_state(config, args.oracle)
    elif args.command == 'alpha-sweep':
        cmd_alpha_sweep(config, args.alphas)
    return EXIT_SUCCESS


def main(argv=None):
    """Entry point of the ``gridvolt`` command."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format='%(asctime)s %(name)s %(levelname)s: %(message)s')
    try:
        logger.debug('%d worker threads', worker_count())
        return run(args)
    except (UsageError, InvalidConfig) as error:
        logger.error('%s', error)
        return EXIT_USAGE
    except InvariantViolation as error:
        logger.error('%s', error)
        return EXIT_INVARIANT
    except NumericalFailure as error:
        logger.error('%s', error)
        return EXIT_NUMERICAL


if __name__ == '__main__':
    sys.exit(main())
