"""Exception hierarchy.

Everything raised on bad data derives from :class:`DataError`; the CLI maps
those to exit code 2 and :class:`ConfigError` to exit code 1.
"""

from __future__ import annotations


class OrderTransitError(Exception):
    """Base class for all package errors."""


class DataError(OrderTransitError, ValueError):
    """Input data is unusable for the requested computation."""


class ConfigError(OrderTransitError, ValueError):
    """Invalid run configuration. ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class UnknownEventType(DataError):
    def __init__(self, wire: str):
        self.wire = wire
        super().__init__(f"unknown event type {wire!r}")


class MalformedRow(DataError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class TooManyErrors(DataError):
    """Raised when the malformed-row count passes the configured ceiling."""

    def __init__(self, errors: list[MalformedRow]):
        self.errors = errors
        super().__init__(f"aborted after {len(errors)} malformed rows (last: {errors[-1]})")


class OutOfOrderTimestamp(DataError):
    def __init__(self, ticker: str, date, line: int | None):
        self.ticker = ticker
        self.date = date
        self.line = line
        super().__init__(f"timestamp goes backwards for {ticker} on {date} at line {line}")


class SequenceTooShort(DataError):
    pass


class DegenerateTable(DataError):
    pass


class EmptyCounts(DataError):
    pass


class EmptyInput(DataError):
    pass


class NotErgodic(DataError):
    def __init__(self, classification):
        self.classification = classification
        super().__init__(f"chain is not ergodic: {classification}")


class AbsoluteContinuityViolation(DataError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"u[{index}] > 0 but v[{index}] == 0")


class LengthMismatch(DataError):
    pass


class TooFewObservations(DataError):
    pass


class ConvergenceFailure(OrderTransitError, RuntimeError):
    pass


class KTooLarge(DataError):
    pass


class ZoneTooShort(DataError):
    pass
