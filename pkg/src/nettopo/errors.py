"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to so the command-line layer
does not need a lookup table.
"""


class NetTopoError(Exception):
    exit_code = 1


class InvalidArgumentError(NetTopoError, ValueError):
    exit_code = 2


class NumericalError(NetTopoError, ArithmeticError):
    exit_code = 3


class SingularSampleError(NumericalError):
    """A sample matrix that must be inverted is (numerically) singular."""

    def __init__(self, message, smallest_singular_value=None):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value


class IllConditionedError(NumericalError):
    """A shifted sample matrix is too close to singular to invert."""

    def __init__(self, message, smallest_eigenvalue=None):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class DegenerateSignalError(NumericalError):
    """A node's observation window has (numerically) zero spread."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class UpdateDegenerateError(NumericalError):
    """The recursive update hit a zero eigenvalue in ``z z^T - sigma^2 I``."""


class InsufficientSignalError(NumericalError):
    """Every regression window was skipped."""


class PersistenceError(NetTopoError, OSError):
    exit_code = 4
