# -*- coding: utf-8 -*-
"""
    gridvolt.converter
    ~~~~~~~~~~~~~~~~~~

    The module :mod:`gridvolt.converter` defines functions to convert
    :class:`dataframes <pandas.DataFrame>` and files to/from Grid-Volt inputs or outputs format:

    * networks, as :class:`dataframes <pandas.DataFrame>` of buses and lines or as network files
      (a JSON document with the substation voltage and the arrays of buses and lines),
    * policy checkpoints (JSON),
    * trajectories, episode metrics and training logs (comma-separated files).

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import json
import logging
import re

import numpy as np
import pandas as pd

from gridvolt import parameters
from gridvolt.errors import CorruptCheckpoint, InvalidNetwork, InvariantViolation
from gridvolt.network import BUS_FIELDS, LINE_FIELDS, Bus, Line, build_network
from gridvolt.policy import HIGH, LOW, PolicyParams, check_derived

logger = logging.getLogger(__name__)

#: the columns of the episode metrics
METRICS_COLUMNS = ['episode', 'recovery_time', 'transient_cost', 'steady_state_objective', 'converged', 'final_kkt_residual', 'clipped_steps']
#: the columns of the training log
TRAINING_LOG_COLUMNS = ['episode', 'transient_cost', 'clipped_fraction']

CHECKPOINT_FORMAT = 'gridvolt-checkpoint'
CHECKPOINT_VERSION = 1
#: the branches of a checkpoint, by key
CHECKPOINT_BRANCHES = {'high': HIGH, 'low': LOW}
#: the keys of a network file
NETWORK_KEYS = ('v0', 'buses', 'lines')

_DECODER = json.JSONDecoder()
_WHITESPACE = re.compile(r'[ \t\n\r]*')


def from_dataframes(bus_inputs, line_inputs, v0=parameters.V0):
    """
    Convert a network from Pandas dataframes to Grid-Volt format.

    :param pandas.DataFrame bus_inputs: one row per bus, with the columns :data:`~gridvolt.network.BUS_FIELDS` (missing columns take their default)
    :param pandas.DataFrame line_inputs: one row per line, with the columns :data:`~gridvolt.network.LINE_FIELDS`
    :param float v0: squared voltage at the substation (p.u.)

    :return: the network
    :rtype: gridvolt.network.Network
    """
    bus_columns = [column for column in BUS_FIELDS if column in bus_inputs.columns]
    buses = [Bus(**_typed(row, int_fields=('id',))) for row in bus_inputs[bus_columns].sort_values('id').to_dict('records')]
    lines = [Line(**_typed(row, int_fields=('from_bus', 'to_bus'))) for row in line_inputs[LINE_FIELDS].to_dict('records')]
    return build_network(buses, lines, v0)


def to_dataframes(network):
    """
    Convert a network from Grid-Volt format to Pandas dataframes.

    :return: the buses and lines dataframes
    :rtype: (pandas.DataFrame, pandas.DataFrame)
    """
    bus_df = pd.DataFrame([[getattr(bus, name) for name in BUS_FIELDS] for bus in network.buses], columns=BUS_FIELDS)
    line_df = pd.DataFrame([[getattr(line, name) for name in LINE_FIELDS] for line in network.lines], columns=LINE_FIELDS)
    return bus_df, line_df


def _typed(record, int_fields):
    return {name: int(value) if name in int_fields else float(value) for name, value in record.items()}


def save_network(network, path):
    """Write `network` as a network file, one bus or line per text line."""
    buses = [json.dumps({name: getattr(bus, name) for name in BUS_FIELDS}) for bus in network.buses]
    lines = [json.dumps({name: getattr(line, name) for name in LINE_FIELDS}) for line in network.lines]
    with open(path, 'w') as f:
        f.write('{{"v0": {},\n'.format(json.dumps(network.v0)))
        f.write(' "buses": [\n  {}\n ],\n'.format(',\n  '.join(buses)))
        f.write(' "lines": [\n  {}\n ]}}\n'.format(',\n  '.join(lines)))


def load_network(path):
    """
    Read a network file: one JSON document {"v0": ..., "buses": [...], "lines": [...]}. The
    layout of the document is free; "v0" defaults to :data:`~gridvolt.parameters.V0`.

    :param str path: the file path

    :return: the network
    :rtype: gridvolt.network.Network

    :raises InvalidNetwork: (or a subclass) if the file is malformed or the network invalid; the
        error carries the 1-based text line where the faulty entry starts when it can be located
    """
    with open(path) as f:
        text = f.read()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as error:
        raise InvalidNetwork('not a JSON document ({})'.format(error.msg), lineno=error.lineno)
    if not isinstance(document, dict):
        raise InvalidNetwork('expected an object with the keys {}'.format(', '.join(NETWORK_KEYS)))
    origin = _entry_lines(text)
    unknown = set(document) - set(NETWORK_KEYS)
    if unknown:
        key = sorted(unknown)[0]
        raise InvalidNetwork('unknown key {!r}'.format(key), lineno=origin.get(key))
    for key in ('buses', 'lines'):
        if not isinstance(document.get(key), list):
            raise InvalidNetwork('"{}" must be an array'.format(key), lineno=origin.get(key))
    try:
        v0 = float(document.get('v0', parameters.V0))
    except (TypeError, ValueError) as error:
        raise InvalidNetwork('malformed v0 ({})'.format(error), lineno=origin.get('v0'))

    buses = [_entry(Bus, value, BUS_FIELDS, ('id',), ('buses', position), origin) for position, value in enumerate(document['buses'])]
    lines = [_entry(Line, value, LINE_FIELDS, ('from_bus', 'to_bus'), ('lines', position), origin)
             for position, value in enumerate(document['lines'])]
    try:
        return build_network(buses, lines, v0)
    except InvalidNetwork as error:
        lineno = origin.get(error.entry)
        if lineno is None:
            raise
        raise type(error)(error.reason, entry=error.entry, lineno=lineno)


def _entry(cls, value, names, int_fields, entry, origin):
    try:
        return cls(**_fields(value, names, int_fields))
    except InvalidNetwork as error:
        raise type(error)(error.reason, entry=entry, lineno=origin.get(entry))
    except (TypeError, ValueError, AttributeError) as error:
        raise InvalidNetwork('malformed {} entry ({})'.format(entry[0][:-1], error), entry=entry, lineno=origin.get(entry))


def _fields(value, names, int_fields):
    if not isinstance(value, dict):
        raise TypeError('expected an object')
    unknown = set(value) - set(names)
    if unknown:
        raise ValueError('unknown fields {}'.format(sorted(unknown)))
    return {name: int(field) if name in int_fields else float(field) for name, field in value.items()}


def _skip(text, position):
    return _WHITESPACE.match(text, position).end()


def _entry_lines(text):
    """
    1-based text line where each value of a valid network document starts, keyed by the
    top-level key, or by ('buses' | 'lines', position) for the entries of the arrays.
    """
    origin = {}
    position = _skip(text, 0)
    if not text.startswith('{', position):
        return origin
    position = _skip(text, position + 1)
    while not text.startswith('}', position):
        key, position = _DECODER.raw_decode(text, position)
        position = _skip(text, _skip(text, position) + 1)  # past the colon
        origin[key] = text.count('\n', 0, position) + 1
        if key in ('buses', 'lines') and text.startswith('[', position):
            position = _skip(text, position + 1)
            index = 0
            while not text.startswith(']', position):
                origin[(key, index)] = text.count('\n', 0, position) + 1
                _, position = _DECODER.raw_decode(text, position)
                position = _skip(text, position)
                if text.startswith(',', position):
                    position = _skip(text, position + 1)
                index += 1
            position += 1
        else:
            _, position = _DECODER.raw_decode(text, position)
        position = _skip(text, position)
        if text.startswith(',', position):
            position = _skip(text, position + 1)
    return origin


def save_checkpoint(policy, path, metadata=None):
    """
    Write a policy checkpoint. The derived weights and biases are stored next to the
    unconstrained parameters; :func:`load_checkpoint` checks that they still agree.

    :param gridvolt.policy.PolicyParams policy: the policy
    :param str path: the file path
    :param dict metadata: JSON-serializable information stored with the policy
    """
    branches = {}
    for key, sign in CHECKPOINT_BRANCHES.items():
        w, b = policy.weights(sign)
        u, beta = (policy.u_high, policy.beta_high) if sign == HIGH else (policy.u_low, policy.beta_low)
        branches[key] = {'u': u.tolist(), 'beta': beta.tolist(), 'w': w.tolist(), 'b': b.tolist()}
    document = {'format': CHECKPOINT_FORMAT, 'version': CHECKPOINT_VERSION, 'bus_ids': list(policy.bus_ids), 'd': policy.d,
                'c': policy.c, 'epsilon': policy.epsilon, 'branches': branches, 'metadata': metadata or {}}
    with open(path, 'w') as f:
        json.dump(document, f, indent=1, sort_keys=True)
        f.write('\n')


def _read_checkpoint(path):
    try:
        with open(path) as f:
            document = json.load(f)
    except ValueError as error:
        raise CorruptCheckpoint('{}: not a JSON document ({})'.format(path, error))
    if not isinstance(document, dict) or document.get('format') != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint('{}: not a Grid-Volt checkpoint'.format(path))
    if document.get('version') != CHECKPOINT_VERSION:
        raise CorruptCheckpoint('{}: unsupported checkpoint version {!r}'.format(path, document.get('version')))
    return document


def load_checkpoint(path, network=None):
    """
    Read a policy checkpoint and check its structure again.

    :param str path: the file path
    :param gridvolt.network.Network network: if given, the policy must control exactly its controlled buses

    :return: the policy
    :rtype: gridvolt.policy.PolicyParams

    :raises CorruptCheckpoint: if the file cannot be decoded or misses a field
    :raises InvariantViolation: if the stored policy breaks its structure or does not fit `network`
    """
    document = _read_checkpoint(path)
    try:
        high, low = document['branches']['high'], document['branches']['low']
        policy = PolicyParams(document['bus_ids'], np.array(high['u'], dtype=float), np.array(high['beta'], dtype=float),
                              np.array(low['u'], dtype=float), np.array(low['beta'], dtype=float), document['c'], document['epsilon'])
        derived = {sign: (np.array(document['branches'][key]['w'], dtype=float), np.array(document['branches'][key]['b'], dtype=float))
                   for key, sign in CHECKPOINT_BRANCHES.items()}
        d = document['d']
    except InvariantViolation:
        raise
    except (KeyError, TypeError) as error:
        raise CorruptCheckpoint('{}: missing or malformed field ({})'.format(path, error))
    except ValueError as error:
        raise CorruptCheckpoint('{}: malformed array ({})'.format(path, error))
    if d != policy.d:
        raise InvariantViolation('{}: the checkpoint declares d = {!r} units per branch, its arrays have {}'.format(path, d, policy.d))
    for sign, (w, b) in derived.items():
        check_derived(policy, sign, w, b)
    if network is not None:
        policy.check_network(network)
    return policy


def checkpoint_metadata(path):
    """:return: the metadata stored with a checkpoint
    :rtype: dict"""
    return _read_checkpoint(path).get('metadata', {})


def trajectory_to_dataframe(trajectory):
    """
    Convert a trajectory to a dataframe with the columns t, v_1..v_n, q_1..q_n, xi_1..xi_n, cost.

    :param gridvolt.simulation.Trajectory trajectory: the trajectory

    :rtype: pandas.DataFrame
    """
    n = trajectory.v.shape[1]
    columns = {'t': trajectory.times}
    for name in ('v', 'q', 'xi'):
        values = getattr(trajectory, name)
        for k in range(n):
            columns['{}_{}'.format(name, k + 1)] = values[:, k]
    columns['cost'] = trajectory.cost
    return pd.DataFrame(columns)


def metrics_to_dataframe(metrics):
    """
    :param list metrics: the :class:`~gridvolt.simulation.EpisodeMetrics` of successive episodes

    :rtype: pandas.DataFrame
    """
    rows = [[episode, m.recovery_time, m.transient_cost, m.steady_state_objective, m.converged, m.final_kkt_residual, m.clipped_steps]
            for episode, m in enumerate(metrics)]
    return pd.DataFrame(rows, columns=METRICS_COLUMNS)


def training_log_to_dataframe(log):
    return pd.DataFrame(log, columns=TRAINING_LOG_COLUMNS)


def to_csv(dataframe, path):
    """Write `dataframe` with :data:`~gridvolt.parameters.FLOAT_FORMAT` floats and no index."""
    dataframe.to_csv(path, index=False, float_format=parameters.FLOAT_FORMAT)
