# -*- coding: utf-8 -*-
"""
    gridvolt.network
    ~~~~~~~~~~~~~~~~

    The module :mod:`gridvolt.network` represents a radial distribution feeder and
    implements the linearized branch-flow voltage map

        v = R p + X q + v0 1 = X q + v_env,

    where :math:`R_{ij}` (resp. :math:`X_{ij}`) is twice the sum of the resistances
    (resp. reactances) of the lines shared by the root paths of buses i and j.

    Buses are numbered 0..N, bus 0 being the substation. Every state vector has length
    n = N and its entry k refers to bus k + 1 (see :meth:`Network.index`).

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

import logging
from dataclasses import dataclass

import networkx as nx
import numpy as np

from gridvolt import parameters
from gridvolt.errors import CycleDetected, DimensionMismatch, DisconnectedBus, DuplicateLine, InvalidNetwork

logger = logging.getLogger(__name__)

#: the fields of a bus, in file order
BUS_FIELDS = ['id', 'p', 'q_min', 'q_max', 'v_nom', 'v_lo', 'v_hi', 'eta', 's_bar']
#: the fields of a line, in file order
LINE_FIELDS = ['from_bus', 'to_bus', 'r', 'x']


@dataclass(frozen=True)
class Bus:
    """A bus of the feeder. A bus with ``q_min == q_max == 0`` hosts no inverter."""
    id: int
    p: float = 0.            #: active power injection (p.u.)
    q_min: float = 0.        #: lower reactive capacity (p.u.)
    q_max: float = 0.        #: upper reactive capacity (p.u.)
    v_nom: float = parameters.V_NOM  #: nominal squared voltage (p.u.)
    v_lo: float = parameters.V_LO    #: lower edge of the safe band (p.u.)
    v_hi: float = parameters.V_HI    #: upper edge of the safe band (p.u.)
    eta: float = parameters.ETA      #: cost coefficient of reactive power (dimensionless)
    s_bar: float = 1.                #: apparent power capacity (p.u.)

    @classmethod
    def from_capacity(cls, id, p_bar, p=0., **kwargs):
        """
        Bus hosting an inverter of active rating `p_bar`, with q_max = Q_RATIO * p_bar,
        q_min = -q_max and s_bar = sqrt(p_bar^2 + q_max^2).

        :param int id: bus index
        :param float p_bar: active power rating of the inverter (p.u.)
        :param float p: active power injection (p.u.)

        :return: the bus
        :rtype: Bus
        """
        q_max = parameters.Q_RATIO * p_bar
        return cls(id=id, p=p, q_min=-q_max, q_max=q_max, s_bar=float(np.hypot(p_bar, q_max)), **kwargs)

    @property
    def controllable(self):
        return self.q_min < 0 < self.q_max

    def check(self):
        """Raise :class:`InvalidNetwork` if the bus breaks its invariants. The substation is not checked."""
        if self.id == 0:
            return
        if not (self.q_min < 0 < self.q_max or self.q_min == self.q_max == 0):
            raise InvalidNetwork('bus {}: reactive bounds must satisfy q_min < 0 < q_max, or both be 0'.format(self.id))
        if not self.v_lo < self.v_nom < self.v_hi:
            raise InvalidNetwork('bus {}: the band must satisfy v_lo < v_nom < v_hi'.format(self.id))
        if not (self.eta > 0 and self.s_bar > 0):
            raise InvalidNetwork('bus {}: eta and s_bar must be positive'.format(self.id))


@dataclass(frozen=True)
class Line:
    """A line between two buses."""
    from_bus: int
    to_bus: int
    r: float  #: resistance (p.u.)
    x: float  #: reactance (p.u.)

    def check(self):
        if not (self.r > 0 and self.x > 0):
            raise InvalidNetwork('line ({}, {}): r and x must be positive'.format(self.from_bus, self.to_bus))


class Network(object):
    """
    An immutable radial feeder. Build it with :func:`build_network`.

    Attributes are read-only numpy arrays indexed by state position (bus id - 1):
    ``R``, ``X`` (n x n), ``p``, ``q_min``, ``q_max``, ``v_nom``, ``v_lo``, ``v_hi``,
    ``eta``, ``s_bar`` (n) and ``controlled`` (boolean mask, n).
    """

    def __init__(self, buses, lines, v0, paths, R, X):
        self.buses = tuple(buses)
        self.lines = tuple(lines)
        self.v0 = float(v0)
        #: for each bus id, the indices in :attr:`lines` of the lines on its root path
        self.paths = paths
        self.R = _frozen(R)
        self.X = _frozen(X)
        loads = self.buses[1:]
        for name in ('p', 'q_min', 'q_max', 'v_nom', 'v_lo', 'v_hi', 'eta', 's_bar'):
            setattr(self, name, _frozen(np.array([getattr(bus, name) for bus in loads], dtype=float)))
        self.controlled = _frozen(np.array([bus.controllable for bus in loads], dtype=bool))

    @property
    def n(self):
        """Number of non-substation buses, i.e. the length of the state vectors."""
        return len(self.buses) - 1

    @property
    def controlled_ids(self):
        return [bus.id for bus in self.buses[1:] if bus.controllable]

    def index(self, bus_id):
        """Position of bus `bus_id` in the state vectors."""
        if not 1 <= bus_id <= self.n:
            raise IndexError('bus {} has no state entry'.format(bus_id))
        return bus_id - 1

    def bus(self, bus_id):
        return self.buses[bus_id]

    def replace_buses(self, buses):
        """Same topology and lines, other bus data (the matrices are reused)."""
        buses = list(buses)
        if [bus.id for bus in buses] != [bus.id for bus in self.buses]:
            raise InvalidNetwork('the replacement buses must keep the bus ids')
        for bus in buses:
            bus.check()
        return Network(buses, self.lines, self.v0, self.paths, self.R, self.X)

    def __repr__(self):
        return 'Network(n={}, controlled={}, v0={})'.format(self.n, self.controlled_ids, self.v0)


def _frozen(array):
    array = np.array(array, dtype=array.dtype if isinstance(array, np.ndarray) else float)
    array.flags.writeable = False
    return array


def build_network(buses, lines, v0=parameters.V0):
    """
    Validate a radial feeder and compute its root paths and R, X matrices.

    :param list buses: the :class:`Bus` objects, with ids 0..N in order
    :param list lines: the N :class:`Line` objects
    :param float v0: squared voltage at the substation (p.u.)

    :return: the network
    :rtype: Network

    :raises DuplicateLine: if two lines join the same pair of buses
    :raises CycleDetected: if the lines contain a cycle
    :raises DisconnectedBus: if a bus cannot be reached from bus 0
    :raises InvalidNetwork: for any other malformed input
    """
    buses = list(buses)
    lines = list(lines)
    if not buses:
        raise InvalidNetwork('the network has no bus')
    for position, bus in enumerate(buses):
        if bus.id != position:
            raise InvalidNetwork('bus ids must be contiguous from 0, found {} at position {}'.format(bus.id, position), entry=('buses', position))
        try:
            bus.check()
        except InvalidNetwork as error:
            raise InvalidNetwork(error.reason, entry=('buses', position))

    graph = nx.Graph()
    graph.add_nodes_from(range(len(buses)))
    for position, line in enumerate(lines):
        try:
            line.check()
        except InvalidNetwork as error:
            raise InvalidNetwork(error.reason, entry=('lines', position))
        if not (0 <= line.from_bus < len(buses) and 0 <= line.to_bus < len(buses)):
            raise InvalidNetwork('line ({}, {}) refers to an unknown bus'.format(line.from_bus, line.to_bus), entry=('lines', position))
        if line.from_bus == line.to_bus:
            raise CycleDetected('line ({0}, {0}) is a self loop'.format(line.from_bus), entry=('lines', position))
        if graph.has_edge(line.from_bus, line.to_bus):
            raise DuplicateLine('line ({}, {}) is duplicated'.format(line.from_bus, line.to_bus), entry=('lines', position))
        graph.add_edge(line.from_bus, line.to_bus, position=position)

    cycles = nx.cycle_basis(graph)
    if cycles:
        raise CycleDetected('the lines form a cycle through buses {}'.format(sorted(cycles[0])))
    reached = nx.node_connected_component(graph, 0)
    if len(reached) != len(buses):
        missing = sorted(set(range(len(buses))) - reached)
        raise DisconnectedBus('buses {} are not connected to the substation'.format(missing), entry=('buses', missing[0]))

    # root paths, as line positions, in BFS order
    paths = {0: []}
    for parent, child in nx.bfs_edges(graph, 0):
        paths[child] = paths[parent] + [graph.edges[parent, child]['position']]

    n = len(buses) - 1
    incidence = np.zeros((n, len(lines)))
    for bus_id in range(1, n + 1):
        incidence[bus_id - 1, paths[bus_id]] = 1.
    r = np.array([line.r for line in lines], dtype=float)
    x = np.array([line.x for line in lines], dtype=float)
    R = 2. * (incidence * r) @ incidence.T
    X = 2. * (incidence * x) @ incidence.T
    logger.debug('Built a radial network of %d buses and %d lines', len(buses), len(lines))
    return Network(buses, lines, v0, paths, R, X)


def impedance_matrices(network):
    """
    :param Network network: the feeder

    :return: the R and X matrices (p.u.)
    :rtype: (numpy.ndarray, numpy.ndarray)
    """
    return network.R, network.X


def _check_length(network, **vectors):
    for name, vector in vectors.items():
        if np.shape(vector)[-1:] != (network.n,):
            raise DimensionMismatch('{} has shape {}, expected last dimension {}'.format(name, np.shape(vector), network.n))


def voltage(network, q, v_env):
    """
    Squared voltages v = X q + v_env. Both arguments may carry leading batch dimensions.

    :param Network network: the feeder
    :param numpy.ndarray q: reactive injections (p.u.)
    :param numpy.ndarray v_env: uncontrollable voltage component (p.u.)

    :return: squared voltages (p.u.)
    :rtype: numpy.ndarray
    """
    q = np.asarray(q, dtype=float)
    v_env = np.asarray(v_env, dtype=float)
    _check_length(network, q=q, v_env=v_env)
    return q @ network.X + v_env  # X is symmetric


def env_voltage(network, p, v0=None):
    """
    Uncontrollable voltage component v_env = R p + v0 1.

    :param Network network: the feeder
    :param numpy.ndarray p: active injections (p.u.)
    :param float v0: squared voltage at the substation, defaults to the one of the network (p.u.)

    :return: v_env (p.u.)
    :rtype: numpy.ndarray
    """
    p = np.asarray(p, dtype=float)
    _check_length(network, p=p)
    if v0 is None:
        v0 = network.v0
    return p @ network.R + v0


def voltage_branch_flow(network, p, q, v0=None):
    """
    Squared voltages from the linearized branch-flow recursion: the flow entering a bus
    is minus the injections of its subtree, and each line drops the voltage by twice
    r P + x Q. Equals :func:`voltage` applied to :func:`env_voltage`; used as an oracle.

    :param Network network: the feeder
    :param numpy.ndarray p: active injections (p.u.)
    :param numpy.ndarray q: reactive injections (p.u.)
    :param float v0: squared voltage at the substation (p.u.)

    :return: squared voltages (p.u.)
    :rtype: numpy.ndarray
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    _check_length(network, p=p, q=q)
    if v0 is None:
        v0 = network.v0
    # the last line of a root path joins the bus to its parent
    parent = {}
    for bus_id in range(1, network.n + 1):
        line = network.lines[network.paths[bus_id][-1]]
        parent[bus_id] = (line.from_bus if line.to_bus == bus_id else line.to_bus, line)
    order = sorted(parent, key=lambda bus_id: len(network.paths[bus_id]))
    P = {bus_id: -p[bus_id - 1] for bus_id in parent}
    Q = {bus_id: -q[bus_id - 1] for bus_id in parent}
    for bus_id in reversed(order):
        up, _ = parent[bus_id]
        if up != 0:
            P[up] += P[bus_id]
            Q[up] += Q[bus_id]
    v = {0: v0}
    for bus_id in order:
        up, line = parent[bus_id]
        v[bus_id] = v[up] - 2. * (line.r * P[bus_id] + line.x * Q[bus_id])
    return np.array([v[bus_id] for bus_id in range(1, network.n + 1)])
