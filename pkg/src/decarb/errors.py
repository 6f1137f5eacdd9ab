"""Exception hierarchy shared by every stage of the pipeline."""


class DecarbError(Exception):
    """Base class for all library errors."""


class DataError(DecarbError):
    """Problems with input files or their contents."""


class MalformedFile(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class InsufficientData(DataError):
    pass


class UniverseTooSmall(DataError):
    pass


class CalendarDisjoint(DataError):
    pass


class FitError(DecarbError):
    """Factor regression failures."""


class RankDeficient(FitError):
    pass


class InsufficientObservations(FitError):
    pass


class NotPositiveDefinite(FitError):
    pass


class DomainError(DecarbError, ValueError):
    pass


class DimensionMismatch(DecarbError, ValueError):
    pass


class EmptySample(DecarbError, ValueError):
    pass


class SolverError(DecarbError):
    pass


class InfeasibleProblem(SolverError):
    pass


class NoLabeledMonths(DecarbError):
    pass


class ConfigError(DecarbError):
    pass
