"""Exception hierarchy shared across the package.

Two branches matter to callers: UsageError (the request itself is malformed,
e.g. bad parameters) and DataError (the request is fine but the input data is
not). The CLI maps them to exit codes 1 and 2, the service to HTTP 400/422.
"""


class StreamLadderError(Exception):
    """Base class for all package errors."""


class UsageError(StreamLadderError):
    """Invalid invocation: unknown option, contradictory parameters."""


class DataError(StreamLadderError):
    """Invalid input data. Carries optional source context."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)
        self.message = message


# domain
class NonPositiveBitrate(DataError):
    pass


# stats logs
class MalformedRecord(DataError):
    pass


class InvariantViolation(DataError):
    pass


class NonMonotoneFrameIndex(DataError):
    pass


# RQ tables
class MalformedRow(DataError):
    pass


class DuplicatePoint(DataError):
    pass


class MissingQualityColumn(DataError):
    pass


# weight bundles
class UnsupportedVersion(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class CorruptPayload(DataError):
    pass


# synthetic generator
class InvalidConfig(UsageError):
    pass


# feature window
class EmptyInput(DataError):
    pass


class WindowNotFull(DataError):
    pass


class EmptyDataset(DataError):
    pass


# cnn
class ChannelMismatch(DataError):
    pass


class SingleClassDataset(DataError):
    pass


# ladder
class EmptyHull(DataError):
    pass


class MissingMeasurement(DataError):
    pass


class TooFewPoints(DataError):
    pass


# evaluation
class NoOverlap(DataError):
    pass


class DegenerateVariance(DataError):
    pass


class GridMismatch(DataError):
    pass


# runtime
class MissingBundle(DataError):
    pass


class StreamLengthMismatch(DataError):
    pass
