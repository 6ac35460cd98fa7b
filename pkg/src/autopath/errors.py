class AutoPathError(Exception):
    """Base class for all package errors."""


class DataError(AutoPathError):
    """Bad or inconsistent input data (CLI exit code 1)."""


class DanglingEdge(DataError):
    pass


class DimMismatch(DataError):
    pass


class MissingContent(DataError):
    pass


class BadBinary(DataError):
    pass


class EmptyNetwork(DataError):
    pass


class UnknownNode(DataError):
    pass


class UnknownType(DataError):
    pass


class ShapeMismatch(AutoPathError, ValueError):
    pass


class StaleCache(AutoPathError):
    pass


class BadLabel(AutoPathError, ValueError):
    pass


class DegenerateVariance(AutoPathError, ValueError):
    pass


class EmptyCandidates(AutoPathError):
    pass


class IllegalMove(AutoPathError):
    pass


class Diverged(AutoPathError):
    pass


class NonFiniteLoss(AutoPathError):
    pass


class ConfigError(DataError):
    pass


class PathLimitExceeded(AutoPathError):
    pass


class NoSuccessfulSegments(AutoPathError):
    pass


class InsufficientClassMembers(DataError):
    pass


class CannotSatisfyDisjointness(DataError):
    pass


class EmptyTruth(AutoPathError, ValueError):
    pass


class DegenerateClasses(AutoPathError, ValueError):
    pass


class SpecInfeasible(AutoPathError, ValueError):
    pass
