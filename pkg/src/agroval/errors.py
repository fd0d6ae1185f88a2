"""Exception hierarchy.

Two families matter to callers: :class:`DataError` (bad or insufficient input
data, CLI exit code 2) and :class:`RunError` (a pipeline contract was broken
while running, CLI exit code 3).
"""


class AgrovalError(Exception):
    """Base class for every error raised by this package."""


class DataError(AgrovalError, ValueError):
    pass


class RunError(AgrovalError, RuntimeError):
    pass


# ingest
class MalformedRow(DataError):
    def __init__(self, line: int, column: str, message: str = ""):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column!r}: {message or 'malformed value'}")


class DateGap(DataError):
    def __init__(self, region: str, missing_date):
        self.region = region
        self.missing_date = missing_date
        super().__init__(f"region {region!r}: missing date {missing_date}")


class InvariantViolation(DataError):
    pass


class DuplicateRecord(DataError):
    pass


class NonPositiveYield(DataError):
    pass


class ConfigInvalid(DataError):
    pass


# indicators
class EmptySeries(DataError):
    pass


class InsufficientReference(DataError):
    pass


class DegenerateFit(DataError):
    pass


class LengthMismatch(DataError):
    pass


class UnknownIndicator(DataError):
    pass


class NoRowsEmitted(DataError):
    pass


# targets
class InsufficientYears(DataError):
    pass


class YearOutsideTrend(DataError):
    pass


class EmptyRegionSeries(DataError):
    pass


class NonPositiveMean(DataError):
    pass


# splits
class YearNotInPanel(DataError):
    pass


class EmptyPool(DataError):
    pass


class TooFewYears(DataError):
    pass


# models / explain
class DegenerateData(DataError):
    pass


class FeatureMismatch(DataError):
    pass


class MissingCover(DataError):
    pass


class TooManyFeatures(DataError):
    pass


class EmptyRows(DataError):
    pass


class AllZeroImportance(DataError):
    pass


# evaluate / experiment
class ZeroVariance(DataError):
    pass


class Empty(DataError):
    pass


class MissingCells(DataError):
    pass


class NoRecords(DataError):
    pass


class LeakageDetected(RunError):
    pass
