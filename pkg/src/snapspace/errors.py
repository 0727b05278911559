"""Exception hierarchy.

Each family carries the process exit code the command line maps it to:
2 for configuration/usage problems, 3 for numerical failures, 4 for I/O.
"""


class SnapspaceError(Exception):
    exit_code = 1


class ConfigError(SnapspaceError, ValueError):
    exit_code = 2


class InvalidIndexError(ConfigError):
    pass


class DomainError(ConfigError):
    pass


class GridMismatchError(ConfigError):
    pass


class NumericalError(SnapspaceError, ArithmeticError):
    exit_code = 3


class TruncationError(NumericalError):
    pass


class SingularFitError(NumericalError):
    pass


class CollisionError(NumericalError):
    pass


class DataIOError(SnapspaceError, OSError):
    exit_code = 4


class MalformedFileError(DataIOError):
    pass


class ShapeMismatchError(DataIOError):
    pass
