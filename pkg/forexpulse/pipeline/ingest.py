"""Stage 1: Ingest - Parses and validates the tweet, rate, event and audit archives."""

import io
import logging
import re
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from forexpulse.errors import AuditConflictError, EventListError, RateSeriesError
from forexpulse.models.schemas import (
    AnnouncementEvent,
    DeletionAuditEntry,
    EventSource,
    ParseError,
    TweetRecord,
)
from forexpulse.models.series import RateSeries

logger = logging.getLogger(__name__)

RATE_HEADER = ["timestamp", "price"]
EVENT_HEADER = ["timestamp", "source", "description"]
_EPOCH = pd.Timestamp("1970-01-01", tz="UTC")
_PANDAS_LINE = re.compile(r"\bline (\d+)")


def read_lines(path: Path) -> Iterator[str]:
    """
    Stream the lines of a UTF-8 archive.

    Undecodable bytes come through as lone surrogates so that one bad line
    is rejected by the parser instead of aborting the whole read.
    """
    with open(path, "r", encoding="utf-8", errors="surrogateescape") as f:
        yield from f


def _undecodable(line: str) -> bool:
    return any("\udc80" <= ch <= "\udcff" for ch in line)


def _reason(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(p) for p in first["loc"])
    return f"{where}: {first['msg']}" if where else first["msg"]


def parse_tweet_archive(
    line_stream: Iterable[str],
) -> tuple[list[TweetRecord], list[ParseError]]:
    """
    Parse a line-delimited tweet archive.

    Args:
        line_stream: One serialized tweet object per line

    Returns:
        Valid records in input order, and one ParseError per rejected
        nonempty line. Duplicate ids keep the first occurrence.
    """
    records: list[TweetRecord] = []
    errors: list[ParseError] = []
    first_line: dict[str, int] = {}

    for line_no, raw in enumerate(line_stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if _undecodable(line):
            errors.append(ParseError(line=line_no, reason="invalid UTF-8"))
            continue
        try:
            record = TweetRecord.model_validate_json(line)
        except ValidationError as e:
            errors.append(ParseError(line=line_no, reason=_reason(e)))
            continue
        if record.id in first_line:
            errors.append(ParseError(
                line=line_no,
                reason=(
                    f"duplicate id {record.id}: lines {first_line[record.id]} and {line_no}"
                ),
            ))
            continue
        first_line[record.id] = line_no
        records.append(record)

    if errors:
        logger.warning("Tweet archive: %d lines rejected", len(errors))
    logger.info("Tweet archive: %d records parsed", len(records))
    return records, errors


def serialize_tweet(record: TweetRecord) -> str:
    """Serialize a record to one archive line (without newline)."""
    return record.model_dump_json(by_alias=True, exclude_none=True)


def parse_deletion_audit(
    line_stream: Iterable[str],
) -> tuple[list[DeletionAuditEntry], list[ParseError]]:
    """Parse ``audit.jsonl``; repeated ids are resolved by apply_deletion_audit."""
    entries: list[DeletionAuditEntry] = []
    errors: list[ParseError] = []
    for line_no, raw in enumerate(line_stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if _undecodable(line):
            errors.append(ParseError(line=line_no, reason="invalid UTF-8"))
            continue
        try:
            entries.append(DeletionAuditEntry.model_validate_json(line))
        except ValidationError as e:
            errors.append(ParseError(line=line_no, reason=_reason(e)))
    if errors:
        logger.warning("Deletion audit: %d lines rejected", len(errors))
    return entries, errors


def serialize_audit_entry(entry: DeletionAuditEntry) -> str:
    return entry.model_dump_json(by_alias=True)


def _read_csv(
    line_stream: Iterable[str], error: type[Union[RateSeriesError, EventListError]]
) -> pd.DataFrame:
    lines = [line.rstrip("\r\n") for line in line_stream]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        return pd.DataFrame()
    for row, line in enumerate(lines, start=1):
        if _undecodable(line):
            raise error(f"invalid UTF-8 at row {row}", row=row)
    try:
        return pd.read_csv(
            io.StringIO("\n".join(lines) + "\n"),
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            skipinitialspace=True,
        )
    except ValueError as e:
        # pandas reports physical lines, header included, same as our rows
        found = _PANDAS_LINE.search(str(e))
        row = int(found.group(1)) if found else None
        where = f" at row {row}" if row is not None else ""
        raise error(f"malformed CSV{where}: {e}", row=row) from None


def _parse_timestamps(values: pd.Series) -> pd.Series:
    return pd.to_datetime(values, utc=True, format="ISO8601", errors="coerce")


def _row(index: int) -> int:
    # physical line number: header is row 1
    return index + 2


def parse_rate_series(line_stream: Iterable[str], pair: str = "EURUSD") -> RateSeries:
    """
    Parse ``rates.csv`` into a RateSeries, failing on the first bad row.

    Args:
        line_stream: Lines of a CSV file with header ``timestamp,price``
        pair: Currency pair label

    Returns:
        RateSeries with gaps preserved
    """
    frame = _read_csv(line_stream, RateSeriesError)
    if [c.strip() for c in frame.columns] != RATE_HEADER:
        raise RateSeriesError("expected header timestamp,price", row=1)

    stamps = _parse_timestamps(frame.iloc[:, 0])
    bad = np.flatnonzero(stamps.isna().to_numpy())
    if bad.size:
        row = _row(int(bad[0]))
        raise RateSeriesError(f"invalid timestamp at row {row}", row=row)

    off_minute = np.flatnonzero((stamps.dt.floor("min") != stamps).to_numpy())
    if off_minute.size:
        row = _row(int(off_minute[0]))
        raise RateSeriesError(f"timestamp not on a minute boundary at row {row}", row=row)

    prices = pd.to_numeric(frame.iloc[:, 1], errors="coerce").to_numpy(dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(prices) | ~(prices > 0))
    if bad.size:
        row = _row(int(bad[0]))
        raise RateSeriesError(f"price must be a positive number at row {row}", row=row)

    seconds = ((stamps - _EPOCH) // pd.Timedelta(seconds=1)).to_numpy(dtype=np.int64)
    bad = np.flatnonzero(np.diff(seconds) <= 0)
    if bad.size:
        row = _row(int(bad[0]) + 1)
        raise RateSeriesError(f"non-monotonic at row {row}", row=row)

    logger.info("Rate series %s: %d points", pair, seconds.size)
    return RateSeries(pair=pair, seconds=seconds, prices=prices)


def parse_event_list(line_stream: Iterable[str]) -> list[AnnouncementEvent]:
    """
    Parse ``events.csv``; events come back sorted by timestamp (stable).

    An optional fourth column ``event_id`` names the events; otherwise ids
    are assigned from the input order.
    """
    frame = _read_csv(line_stream, EventListError)
    columns = [c.strip() for c in frame.columns]
    if columns[:3] != EVENT_HEADER or columns[3:] not in ([], ["event_id"]):
        raise EventListError("expected header timestamp,source,description[,event_id]", row=1)

    stamps = _parse_timestamps(frame.iloc[:, 0])
    events: list[AnnouncementEvent] = []
    seen: set[str] = set()
    for index in range(len(frame)):
        row = _row(index)
        if pd.isna(stamps.iloc[index]):
            raise EventListError(f"invalid timestamp at row {row}", row=row)
        token = str(frame.iloc[index, 1]).strip().upper()
        try:
            source = EventSource(token)
        except ValueError:
            raise EventListError(f"unknown source {token!r} at row {row}", row=row) from None
        event_id = str(frame.iloc[index, 3]).strip() if len(columns) > 3 else ""
        event_id = event_id or f"E{index + 1:05d}"
        if event_id in seen:
            raise EventListError(f"duplicate event id {event_id} at row {row}", row=row)
        seen.add(event_id)
        events.append(AnnouncementEvent(
            event_id=event_id,
            timestamp=stamps.iloc[index].to_pydatetime(),
            source=source,
            description=str(frame.iloc[index, 2]),
        ))

    events.sort(key=lambda e: e.timestamp)
    logger.info("Event list: %d events", len(events))
    return events


def apply_deletion_audit(
    tweets: Sequence[TweetRecord],
    audit: Iterable[DeletionAuditEntry],
    latest_wins: bool = False,
) -> tuple[list[TweetRecord], list[str]]:
    """
    Mark tweets found dead by the audit as deleted.

    Args:
        tweets: Parsed tweet records
        audit: Audit entries, possibly several per id
        latest_wins: Resolve alive/dead conflicts by the latest check

    Returns:
        Updated records (input order) and audit ids with no matching tweet
    """
    by_id: dict[str, list[DeletionAuditEntry]] = defaultdict(list)
    for entry in audit:
        by_id[entry.tweet_id].append(entry)

    decided: dict[str, DeletionAuditEntry] = {}
    conflicts: list[str] = []
    for tweet_id, entries in by_id.items():
        candidates = entries
        if len({e.alive for e in entries}) > 1:
            if not latest_wins:
                conflicts.append(tweet_id)
                continue
            latest = max(e.checked_at for e in entries)
            candidates = [e for e in entries if e.checked_at == latest]
            if len({e.alive for e in candidates}) > 1:
                conflicts.append(tweet_id)
                continue
        decided[tweet_id] = max(candidates, key=lambda e: e.checked_at)
    if conflicts:
        raise AuditConflictError(conflicts)

    known = {t.id for t in tweets}
    unmatched = [tweet_id for tweet_id in by_id if tweet_id not in known]

    updated: list[TweetRecord] = []
    too_early: list[str] = []
    for tweet in tweets:
        entry = decided.get(tweet.id)
        if entry is None:
            updated.append(tweet)
            continue
        if entry.checked_at < tweet.timestamp:
            too_early.append(tweet.id)
            continue
        if entry.alive:
            updated.append(tweet)
        else:
            updated.append(tweet.model_copy(
                update={"deleted": True, "audit_time": entry.checked_at}
            ))
    if too_early:
        raise AuditConflictError(too_early, reason="audit checked before the tweet was posted")

    if unmatched:
        logger.warning("Deletion audit: %d ids match no tweet", len(unmatched))
    logger.info(
        "Deletion audit: %d of %d tweets deleted",
        sum(1 for t in updated if t.deleted), len(updated),
    )
    return updated, unmatched


def deleted_fraction(tweets: Sequence[TweetRecord]) -> float:
    if not tweets:
        return 0.0
    return sum(1 for t in tweets if t.deleted) / len(tweets)


def load_tweets(path: Path) -> tuple[list[TweetRecord], list[ParseError]]:
    return parse_tweet_archive(read_lines(path))


def load_rates(path: Path, pair: str = "EURUSD") -> RateSeries:
    return parse_rate_series(read_lines(path), pair=pair)


def load_events(path: Path) -> list[AnnouncementEvent]:
    return parse_event_list(read_lines(path))


def load_audit(path: Optional[Path]) -> tuple[list[DeletionAuditEntry], list[ParseError]]:
    if path is None:
        return [], []
    return parse_deletion_audit(read_lines(path))
