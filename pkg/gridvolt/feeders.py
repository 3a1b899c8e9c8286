# -*- coding: utf-8 -*-
"""
    gridvolt.feeders
    ~~~~~~~~~~~~~~~~

    The module :mod:`gridvolt.feeders` ships two synthetic radial feeders shaped after the
    IEEE 13-bus and 123-bus test feeders, with their inverters at the same buses.

    Line data of the reference feeders is not used: impedances are drawn uniformly in
    :data:`~gridvolt.parameters.FEEDER_IMPEDANCE_RANGE` with a fixed seed, then expressed
    on an impedance base such that the largest eigenvalue of X restricted to the
    controlled buses equals :data:`~gridvolt.parameters.FEEDER_X_SCALE`. On that base the
    sampling period h = 1 stays below the projected-gradient step bound.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import numpy as np
import scipy.linalg

from gridvolt import parameters
from gridvolt.network import Bus, Line, build_network

#: parent of each bus of the 13-bus feeder (650 -> 0, 632 -> 1, 633 -> 2, 634 -> 3, 645 -> 4, 646 -> 5, 671 -> 6,
#: 684 -> 7, 611 -> 8, 652 -> 9, 680 -> 10, 692 -> 11, 675 -> 12)
IEEE13_PARENTS = [None, 0, 1, 2, 1, 4, 1, 6, 7, 7, 6, 6, 11]
IEEE13_CONTROLLED = [2, 7, 9]

IEEE123_SIZE = 123
IEEE123_CONTROLLED = [10, 11, 16, 20, 33, 36, 48, 59, 61, 66, 75, 83, 92, 104]
#: maximal distance, in bus numbers, between a bus of the 123-bus feeder and its parent
IEEE123_REACH = 8


def synthetic_feeder(parents, controlled, seed=parameters.FEEDER_SEED, p_bar=parameters.P_BAR, x_scale=parameters.FEEDER_X_SCALE):
    """
    Radial feeder of the given topology with random line impedances.

    :param list parents: parent of each bus, `parents[0]` being ignored (substation)
    :param list controlled: ids of the buses hosting an inverter
    :param int seed: seed of the impedance draw
    :param float p_bar: active rating of the inverters (p.u.)
    :param float x_scale: largest eigenvalue of X restricted to the controlled buses (p.u.)

    :return: the network
    :rtype: gridvolt.network.Network
    """
    rng = np.random.default_rng(seed)
    low, high = parameters.FEEDER_IMPEDANCE_RANGE
    n_lines = len(parents) - 1
    x = rng.uniform(low, high, n_lines)
    r = x * parameters.FEEDER_R_OVER_X * rng.uniform(0.5, 1.5, n_lines)

    buses = [Bus(id=0)]
    for bus_id in range(1, len(parents)):
        buses.append(Bus.from_capacity(bus_id, p_bar) if bus_id in controlled else Bus(id=bus_id))

    # unscaled network, to choose the impedance base
    lines = [Line(parent, bus_id, r[bus_id - 1], x[bus_id - 1]) for bus_id, parent in enumerate(parents) if bus_id > 0]
    network = build_network(buses, lines)
    positions = [network.index(bus_id) for bus_id in controlled]
    largest = scipy.linalg.eigvalsh(network.X[np.ix_(positions, positions)])[-1]
    scale = x_scale / largest
    lines = [Line(line.from_bus, line.to_bus, line.r * scale, line.x * scale) for line in lines]
    return build_network(buses, lines)


def ieee13_like(seed=parameters.FEEDER_SEED):
    """13-bus feeder with inverters at buses 2, 7 and 9."""
    return synthetic_feeder(IEEE13_PARENTS, IEEE13_CONTROLLED, seed)


def ieee123_parents(seed=parameters.FEEDER_SEED):
    """Random recursive tree of 123 buses: each bus hangs from one of the :data:`IEEE123_REACH` previous buses."""
    rng = np.random.default_rng(seed + 123)
    parents = [None]
    for bus_id in range(1, IEEE123_SIZE):
        parents.append(int(rng.integers(max(0, bus_id - IEEE123_REACH), bus_id)))
    return parents


def ieee123_like(seed=parameters.FEEDER_SEED):
    """123-bus feeder with 14 inverters."""
    return synthetic_feeder(ieee123_parents(seed), IEEE123_CONTROLLED, seed)


#: the shipped feeders, by name
FEEDERS = {'ieee13': ieee13_like, 'ieee123': ieee123_like}
