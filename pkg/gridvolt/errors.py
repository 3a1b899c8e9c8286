# -*- coding: utf-8 -*-
"""
    gridvolt.errors
    ~~~~~~~~~~~~~~~

    The module :mod:`gridvolt.errors` defines the exceptions raised by Grid-Volt.

    Two families are distinguished because the command line maps them to different exit
    statuses: :class:`InvariantViolation` (malformed inputs, broken invariants, safety)
    and :class:`NumericalFailure` (solvers or training that could not produce a finite,
    converged result).

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""


class GridVoltError(Exception):
    pass


class InvariantViolation(GridVoltError, ValueError):
    pass


class NumericalFailure(GridVoltError, ArithmeticError):
    pass


# -- grid model

class InvalidNetwork(InvariantViolation):
    """The network description is not a valid radial feeder.

    :param str message: description of the problem.
    :param tuple entry: ('buses' or 'lines', position in the list) of the faulty entry, if known.
    :param int lineno: 1-based line of the network file holding the faulty entry, if known.
    """

    def __init__(self, message, entry=None, lineno=None):
        self.reason = message
        if lineno is not None:
            message = 'line {}: {}'.format(lineno, message)
        super(InvalidNetwork, self).__init__(message)
        self.entry = entry
        self.lineno = lineno


class CycleDetected(InvalidNetwork):
    pass


class DisconnectedBus(InvalidNetwork):
    pass


class DuplicateLine(InvalidNetwork):
    pass


class DimensionMismatch(InvariantViolation):
    pass


# -- optimization

class ProblemTooLarge(InvariantViolation):
    pass


class MaxIterationsExceeded(NumericalFailure):
    """The projected-gradient solver did not reach its tolerance.

    :param str message: description of the problem.
    :param report: the best iterate found, as a :class:`gridvolt.steady_state.SolveReport`.
    """

    def __init__(self, message, report=None):
        super(MaxIterationsExceeded, self).__init__(message)
        self.report = report


class SingularX(NumericalFailure):
    pass


# -- control and certification

class InfeasibleState(InvariantViolation):
    pass


class DegenerateReference(InvariantViolation):
    pass


class SafetyViolation(InvariantViolation):
    pass


# -- configuration and files

class InvalidConfig(InvariantViolation):
    pass


class InvalidAlpha(InvalidConfig):
    pass


class CorruptCheckpoint(InvariantViolation):
    pass


# -- training

class NonFiniteLoss(NumericalFailure):
    """Training produced a non-finite cost or gradient.

    :param str message: description of the problem.
    :param checkpoint: the last policy whose evaluation was finite.
    """

    def __init__(self, message, checkpoint=None):
        super(NonFiniteLoss, self).__init__(message)
        self.checkpoint = checkpoint
