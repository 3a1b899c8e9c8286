# -*- coding: utf-8 -*-
"""
    test_cli
    ~~~~~~~~

    Test the command line: commands, output files and exit statuses.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import os

import numpy as np
import pandas as pd
import pytest

from gridvolt import cli, converter, feeders
from gridvolt.controller import ControllerConfig, Variant, control
from gridvolt.policy import init_policy
from gridvolt.simulation import generate_scenarios
from gridvolt.steady_state import SteadyStateProblem

SMALL_RUN = ['--scenarios', '3', '--horizon', '20']


def read_csv(path):
    return pd.read_csv(path, float_precision='round_trip')


def test_export_and_simulate(tmp_path):
    feeder = str(tmp_path / 'ieee13.json')
    assert cli.main(['export-feeder', 'ieee13', feeder]) == cli.EXIT_SUCCESS
    out = str(tmp_path / 'run')
    assert cli.main(['simulate', '--network', feeder, '--controller', 'sgf', '--out', out] + SMALL_RUN) == cli.EXIT_SUCCESS
    trajectory = read_csv(os.path.join(out, 'trajectory_0000.csv'))
    assert trajectory.shape == (21, 38)
    assert os.path.isfile(os.path.join(out, 'trajectory_0002.csv'))
    metrics = read_csv(os.path.join(out, 'metrics.csv'))
    assert list(metrics.columns) == converter.METRICS_COLUMNS
    assert len(metrics) == 3


def test_simulate_with_checkpoint(tmp_path):
    network = feeders.ieee13_like()
    checkpoint = str(tmp_path / 'policy.json')
    converter.save_checkpoint(init_policy(network, c=0.3), checkpoint)
    out = str(tmp_path / 'run')
    status = cli.main(['simulate', '--checkpoint', checkpoint, '--controller', 'transient', '--kind', 'low', '--out', out] + SMALL_RUN)
    assert status == cli.EXIT_SUCCESS
    trajectory = read_csv(os.path.join(out, 'trajectory_0001.csv'))
    q = trajectory[['q_{}'.format(k) for k in range(1, network.n + 1)]].values
    assert np.all(q >= network.q_min) and np.all(q <= network.q_max)


def test_exit_statuses(tmp_path):
    out = str(tmp_path)
    assert cli.main(['simulate', '--alpha', '2', '--out', out] + SMALL_RUN) == cli.EXIT_USAGE
    assert cli.main(['simulate', '--checkpoint', str(tmp_path / 'missing.json'), '--out', out] + SMALL_RUN) == cli.EXIT_USAGE
    assert cli.main(['simulate', '--network', 'ieee7', '--out', out] + SMALL_RUN) == cli.EXIT_USAGE
    assert cli.main(['simulate', '--gamma', '0', '--out', out] + SMALL_RUN) == cli.EXIT_USAGE

    corrupt = str(tmp_path / 'corrupt.json')
    with open(corrupt, 'w') as f:
        f.write('not a checkpoint')
    assert cli.main(['simulate', '--checkpoint', corrupt, '--out', out] + SMALL_RUN) == cli.EXIT_INVARIANT

    other = str(tmp_path / 'other.json')
    converter.save_checkpoint(init_policy(feeders.ieee123_like()), other)
    assert cli.main(['simulate', '--checkpoint', other, '--out', out] + SMALL_RUN) == cli.EXIT_INVARIANT

    broken = str(tmp_path / 'broken.json')
    with open(broken, 'w') as f:
        f.write('{"buses": [{"id": 0}, {"id": 1, "q_min": -0.4, "q_max": 0.4}],\n "lines": [{"from_bus": 0, "to_bus": 1, "r": 0.1, "x": 0}]}\n')
    assert cli.main(['simulate', '--network', broken, '--out', out] + SMALL_RUN) == cli.EXIT_INVARIANT


def test_parser_errors(capsys):
    with pytest.raises(SystemExit) as error:
        cli.main(['simulate', '--kind', 'sideways'])
    assert error.value.code == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as error:
        cli.main([])
    assert error.value.code == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as error:
        cli.main(['--version'])
    assert error.value.code == 0
    assert 'gridvolt' in capsys.readouterr().out


def test_benchmark(tmp_path):
    first, second = str(tmp_path / 'first'), str(tmp_path / 'second')
    for out in (first, second):
        assert cli.main(['benchmark', '--out', out, '--seed', '4'] + SMALL_RUN) == cli.EXIT_SUCCESS
    with open(os.path.join(first, 'benchmark.csv'), 'rb') as f, open(os.path.join(second, 'benchmark.csv'), 'rb') as g:
        assert f.read() == g.read()
    report = read_csv(os.path.join(first, 'benchmark.csv'))
    assert list(report.columns) == cli.BENCHMARK_COLUMNS
    assert list(report['variant']) == ['tasrl', 'sgf', 'transient']
    assert report['scenario_hash'].nunique() == 1
    network = feeders.ieee13_like()
    assert report['scenario_hash'][0] == cli.scenario_hash(generate_scenarios(network, 'high', count=3, seed=4, horizon=20))
    for variant in ('tasrl', 'sgf', 'transient'):
        assert len(read_csv(os.path.join(first, 'metrics_{}.csv'.format(variant)))) == 3


def test_scenario_hash():
    network = feeders.ieee13_like()
    scenarios = generate_scenarios(network, 'high', count=3, seed=1)
    assert cli.scenario_hash(scenarios) == cli.scenario_hash(generate_scenarios(network, 'high', count=3, seed=1))
    assert cli.scenario_hash(scenarios) != cli.scenario_hash(generate_scenarios(network, 'high', count=3, seed=2))
    assert cli.scenario_hash(scenarios) != cli.scenario_hash(generate_scenarios(network, 'high', count=3, seed=1, horizon=50))


def test_alpha_sweep(tmp_path):
    out = str(tmp_path)
    assert cli.main(['alpha-sweep', '--alphas', '0.1', '0.5', '--out', out] + SMALL_RUN) == cli.EXIT_SUCCESS
    slow = read_csv(os.path.join(out, 'alpha_0.1.csv'))
    fast = read_csv(os.path.join(out, 'alpha_0.5.csv'))
    assert slow.shape == fast.shape == (21, 38)

    # along the alpha = 0.1 trajectory, a saturated rate is never larger than the alpha = 0.5 rate of the same state
    network = feeders.ieee13_like()
    scenario = generate_scenarios(network, 'high', count=3, seed=0, horizon=20)[0]
    problem = SteadyStateProblem.from_network(network, scenario.v_env)
    policy = init_policy(network)
    columns = range(1, network.n + 1)
    v = slow[['v_{}'.format(k) for k in columns]].to_numpy()
    q = slow[['q_{}'.format(k) for k in columns]].to_numpy()
    decision = control(ControllerConfig(0.1, 1., Variant.TASRL, policy), problem, v, q)
    np.testing.assert_allclose(decision.xi, slow[['xi_{}'.format(k) for k in columns]].to_numpy(), rtol=0, atol=1e-12)
    saturated = decision.clipped & network.controlled
    assert saturated.any()
    faster = control(ControllerConfig(0.5, 1., Variant.TASRL, policy), problem, v, q)
    assert np.all(np.abs(decision.xi[saturated]) <= np.abs(faster.xi[saturated]) + 1e-15)

    assert cli.main(['alpha-sweep', '--alphas', '0.2', '0.5', '--controller', 'sgf', '--out', out] + SMALL_RUN) == cli.EXIT_SUCCESS
    assert cli.main(['alpha-sweep', '--alphas', '0.5', '2', '--out', out] + SMALL_RUN) == cli.EXIT_USAGE
    assert cli.main(['alpha-sweep', '--alphas', '2', '--h', '0.5', '--out', out] + SMALL_RUN) == cli.EXIT_SUCCESS


def test_solve_steady_state(tmp_path):
    pgd, oracle = str(tmp_path / 'pgd'), str(tmp_path / 'oracle')
    assert cli.main(['solve-steady-state', '--out', pgd, '--kind', 'low'] + SMALL_RUN) == cli.EXIT_SUCCESS
    assert cli.main(['solve-steady-state', '--oracle', '--out', oracle, '--kind', 'low'] + SMALL_RUN) == cli.EXIT_SUCCESS
    expected = read_csv(os.path.join(oracle, 'steady_state.csv'))
    actual = read_csv(os.path.join(pgd, 'steady_state.csv'))
    np.testing.assert_allclose(actual['objective'], expected['objective'], rtol=0, atol=1e-8)
    assert cli.main(['solve-steady-state', '--oracle', '--network', 'ieee123', '--out', oracle] + SMALL_RUN) == cli.EXIT_INVARIANT


def test_verify_stability(tmp_path, capsys):
    status = cli.main(['verify-stability', '--samples', '20', '--scenarios', '2', '--horizon', '20', '--out', str(tmp_path)])
    assert status in (cli.EXIT_SUCCESS, cli.EXIT_INVARIANT)
    printed = capsys.readouterr().out
    assert 'lemma_violations: 0' in printed
    assert 'passed: ' in printed


def test_train(tmp_path):
    checkpoint = str(tmp_path / 'trained' / 'ckpt.json')
    status = cli.main(['train', '--episodes', '1', '--steps', '10', '--out', checkpoint, '--scenarios', '2', '--horizon', '10'])
    assert status == cli.EXIT_SUCCESS
    network = feeders.ieee13_like()
    converter.load_checkpoint(checkpoint, network)
    metadata = converter.checkpoint_metadata(checkpoint)
    assert metadata['method'] == 'zo'
    assert metadata['episodes'] == 1
    log = read_csv(str(tmp_path / 'trained' / 'ckpt_log.csv'))
    assert list(log.columns) == converter.TRAINING_LOG_COLUMNS
    assert len(log) == 1

    assert cli.main(['train', '--episodes', '0', '--out', str(tmp_path), '--scenarios', '2']) == cli.EXIT_SUCCESS
    converter.load_checkpoint(str(tmp_path / cli.TRAINED_POLICY), network)
    with pytest.raises(SystemExit) as error:
        cli.main(['train', '--checkpoint-out', checkpoint])
    assert error.value.code == cli.EXIT_USAGE
