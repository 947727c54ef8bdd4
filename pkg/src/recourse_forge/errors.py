"""Exception hierarchy shared by every module."""


class RecourseError(Exception):
    """Base class for all recourse-forge errors."""


class DataError(RecourseError):
    """Input data is malformed or inconsistent (CLI exit code 2)."""


class DimensionMismatch(DataError, ValueError):
    pass


class IndexOutOfRange(DataError, IndexError):
    pass


class KindMismatch(DataError, TypeError):
    pass


class Infeasible(RecourseError):
    """No subset of the available actions flips the classifier."""


class CatalogTooLarge(RecourseError, ValueError):
    pass


class EmptyCandidates(RecourseError, ValueError):
    pass


class EmptyDataset(DataError):
    pass


class CfeTooLarge(DataError):
    pass


class UntrainedModel(RecourseError):
    pass


class EmptyModel(RecourseError):
    pass


class LengthMismatch(DataError, ValueError):
    pass


class ZeroMean(RecourseError, ZeroDivisionError):
    pass


class ConfigError(RecourseError, ValueError):
    """Invalid configuration value (CLI exit code 1)."""
