"""Exception hierarchy shared by every module.

Each exception carries a stable ``code`` (its class name) so the CLI can
emit machine-readable failures and the pipeline can record per-sample flags.
"""


class TrackingError(Exception):
    """Base class for all domain errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class DegenerateGeometry(TrackingError):
    pass


class InsufficientMarkers(TrackingError):
    pass


class FitRejected(TrackingError):
    def __init__(self, message: str, rms_mm: float | None = None):
        super().__init__(message)
        self.rms_mm = rms_mm


class UnknownPoint(TrackingError):
    pass


class MissingFrame(TrackingError):
    pass


class InvalidBoneVector(TrackingError):
    pass


class DegenerateProjection(TrackingError):
    pass


class InvalidParams(TrackingError):
    pass


class OutOfRange(TrackingError):
    pass


class ConfigError(TrackingError):
    pass


class ParseError(TrackingError):
    def __init__(self, line: int, column: str | int | None, reason: str):
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {reason}")
        self.line = line
        self.column = column
        self.reason = reason


class NonMonotonicTime(ParseError):
    def __init__(self, line: int, previous: float, current: float):
        super().__init__(
            line, "time_s", f"time {current!r} s does not follow previous sample at {previous!r} s"
        )
        self.previous = previous
        self.current = current
