"""Exception hierarchy for the analytics pipeline.

The CLI maps ``ConfigError`` to exit status 1 and ``DataError`` to exit
status 2. Per-event problems (``EventError``) are recorded in the event
detail table and never abort a run.
"""

from typing import Iterable, Optional


class ForexPulseError(Exception):
    """Base class for every error raised by the pipeline."""

    exit_code = 2

    def __init__(self, message: str, *, module: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.module = module

    def __str__(self) -> str:
        if self.module:
            return f"[{self.module}] {self.message}"
        return self.message


class ConfigError(ForexPulseError):
    """Invalid parameters, missing input paths or an infeasible request."""

    exit_code = 1


class ModelParameterError(ConfigError):
    """Training or featurization parameters out of range."""


class DataError(ForexPulseError):
    """Fatal problem in an input archive."""

    exit_code = 2


class RateSeriesError(DataError):
    def __init__(self, message: str, *, row: Optional[int] = None):
        super().__init__(message, module="ingest")
        self.row = row


class EventListError(DataError):
    def __init__(self, message: str, *, row: Optional[int] = None):
        super().__init__(message, module="ingest")
        self.row = row


class AuditConflictError(DataError):
    """The deletion audit disagrees with itself about one or more tweets."""

    def __init__(self, ids: Iterable[str], reason: str = "conflicting audit entries"):
        self.ids = sorted(set(ids))
        super().__init__(f"{reason}: {', '.join(self.ids)}", module="ingest")


class MissingProfileError(DataError):
    def __init__(self, author_ids: Iterable[str]):
        self.author_ids = sorted(set(author_ids))
        super().__init__(
            f"authors without a profile: {', '.join(self.author_ids)}",
            module="usergroups",
        )


class ForeignAuthorError(DataError):
    def __init__(self, expected: str, found: str, tweet_id: str):
        self.expected = expected
        self.found = found
        super().__init__(
            f"tweet {tweet_id} by {found} in timeline of {expected}",
            module="manipulation",
        )


class DimensionMismatchError(DataError):
    def __init__(self, expected: int, found: int):
        self.expected = expected
        self.found = found
        super().__init__(
            f"feature dimension {found} does not match model dimension {expected}",
            module="stance",
        )


class ModelFormatError(DataError):
    def __init__(self, message: str, *, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, module="stance")
        self.line = line


class EventError(ForexPulseError):
    """An event cannot enter the aggregation."""

    reason = "event error"

    def __init__(self, event_id: str, detail: str):
        super().__init__(f"{event_id}: {detail}", module="eventstudy")
        self.event_id = event_id
        self.detail = detail


class EventSkipped(EventError):
    reason = "skipped"


class NumericalDegeneracy(EventError):
    reason = "numerical degeneracy"
