"""Tests for archive parsing and the deletion audit."""

import json

import pytest

from forexpulse.errors import AuditConflictError, EventListError, RateSeriesError
from forexpulse.models.schemas import DeletionAuditEntry, EventSource, Stance
from forexpulse.pipeline.ingest import (
    apply_deletion_audit,
    deleted_fraction,
    load_rates,
    load_tweets,
    parse_deletion_audit,
    parse_event_list,
    parse_rate_series,
    parse_tweet_archive,
    serialize_tweet,
)
from tests.conftest import utc


def _line(**fields) -> str:
    base = {"id": "1", "user_id": "a1", "timestamp": "2014-03-01T10:00:00Z", "text": "EURUSD up"}
    base.update(fields)
    return json.dumps(base)


class TestTweetArchive:
    """Line-delimited tweet parsing."""

    def test_valid_lines(self):
        records, errors = parse_tweet_archive([
            _line(id=101, retweet_count=3, gold_label="buy"),
            _line(id="102", user_id="a2", is_retweet=True, retweet_of="99"),
        ])
        assert errors == []
        assert [r.id for r in records] == ["101", "102"]
        assert records[0].author_id == "a1"
        assert records[0].gold_label == Stance.BUY
        assert records[0].timestamp == utc("2014-03-01T10:00:00Z")
        assert records[1].retweet_of == "99"

    def test_bad_lines_are_reported_with_line_numbers(self):
        lines = [
            _line(id="1"),
            "",
            "{not json",
            _line(id="2", retweet_count=-1),
            _line(id="3", is_retweet=True),
            _line(id="4"),
        ]
        records, errors = parse_tweet_archive(lines)
        assert [r.id for r in records] == ["1", "4"]
        assert [e.line for e in errors] == [3, 4, 5]

    def test_duplicate_id_keeps_first(self):
        records, errors = parse_tweet_archive([
            _line(id="7", text="first"),
            _line(id="8"),
            _line(id="7", text="second"),
        ])
        assert [r.text for r in records if r.id == "7"] == ["first"]
        assert len(errors) == 1
        assert errors[0].line == 3
        assert "lines 1 and 3" in errors[0].reason

    def test_author_id_alias_accepted(self):
        records, errors = parse_tweet_archive([
            json.dumps({"id": "1", "author_id": "z", "timestamp": "2014-03-01T10:00:00Z", "text": "x"})
        ])
        assert errors == []
        assert records[0].author_id == "z"

    def test_naive_and_fractional_timestamps(self):
        records, _ = parse_tweet_archive([_line(timestamp="2014-03-01T10:00:00.750")])
        assert records[0].timestamp == utc("2014-03-01T10:00:00Z")

    def test_empty_stream(self):
        assert parse_tweet_archive([]) == ([], [])
        assert parse_tweet_archive(["", "  \n"]) == ([], [])

    def test_every_nonblank_line_is_accounted_for(self):
        lines = [_line(id=str(i)) if i % 3 else "{broken" for i in range(1, 31)]
        lines[4:4] = ["", "   "]
        records, errors = parse_tweet_archive(lines)
        assert len(records) == 20
        assert len(records) + len(errors) == sum(1 for line in lines if line.strip())

    def test_invalid_utf8_line_is_skipped(self, tmp_path):
        path = tmp_path / "tweets.jsonl"
        path.write_bytes(
            _line(id="1").encode() + b"\n"
            + b'{"id": "2", "user_id": "a1", "timestamp": "2014-03-01T10:00:00Z", "text": "\xff"}\n'
            + _line(id="3").encode() + b"\n"
        )
        records, errors = load_tweets(path)
        assert [r.id for r in records] == ["1", "3"]
        assert [(e.line, e.reason) for e in errors] == [(2, "invalid UTF-8")]

    def test_serialize_parses_back(self, make_tweet):
        tweet = make_tweet("55", author="a9", text="Long EURUSD @trader http://x.co/1",
                           retweet_count=2, gold_label=Stance.SELL)
        line = serialize_tweet(tweet)
        assert '"user_id":"a9"' in line
        assert '"timestamp":"2014-03-01T10:00:00Z"' in line
        records, errors = parse_tweet_archive([line])
        assert errors == []
        assert records[0] == tweet


class TestRateSeries:
    """Fail-fast CSV price parsing."""

    def test_gaps_are_preserved(self):
        series = parse_rate_series([
            "timestamp,price",
            "2014-01-03T21:58:00Z,1.3601",
            "2014-01-03T21:59:00Z,1.3600",
            "2014-01-05T22:00:00Z,1.3610",
        ])
        assert len(series) == 3
        assert series.seconds[2] - series.seconds[1] == 48 * 3600 + 60
        assert series.prices[1] == pytest.approx(1.36)

    def test_non_monotonic_row(self):
        with pytest.raises(RateSeriesError, match="non-monotonic at row 4") as info:
            parse_rate_series([
                "timestamp,price",
                "2014-01-02T10:00:00Z,1.1000",
                "2014-01-02T10:01:00Z,1.1001",
                "2014-01-02T10:00:00Z,1.1002",
            ])
        assert info.value.row == 4

    @pytest.mark.parametrize(
        "row, match",
        [
            ("2014-01-02T10:01:30Z,1.1", "minute boundary at row 3"),
            ("2014-01-02T10:01:00Z,-1.1", "positive number at row 3"),
            ("2014-01-02T10:01:00Z,abc", "positive number at row 3"),
            ("not a time,1.1", "invalid timestamp at row 3"),
        ],
    )
    def test_bad_rows(self, row, match):
        with pytest.raises(RateSeriesError, match=match):
            parse_rate_series(["timestamp,price", "2014-01-02T10:00:00Z,1.1", row])

    def test_extra_field(self):
        with pytest.raises(RateSeriesError, match="malformed CSV at row 3") as info:
            parse_rate_series([
                "timestamp,price",
                "2014-01-02T10:00:00Z,1.1",
                "2014-01-02T10:01:00Z,1.1,extra",
            ])
        assert info.value.row == 3

    def test_invalid_utf8(self, tmp_path):
        path = tmp_path / "rates.csv"
        path.write_bytes(b"timestamp,price\n2014-01-02T10:00:00Z,1.1\xfe\n")
        with pytest.raises(RateSeriesError, match="invalid UTF-8 at row 2"):
            load_rates(path)

    def test_header_required(self):
        with pytest.raises(RateSeriesError, match="header"):
            parse_rate_series(["time,value", "2014-01-02T10:00:00Z,1.1"])


class TestEventList:
    def test_sorted_with_default_ids(self):
        events = parse_event_list([
            "timestamp,source,description",
            "2014-02-01T12:45:00Z,ECB,Rate decision",
            '2014-01-15T19:00:00Z,FED,"FOMC statement, January"',
        ])
        assert [e.event_id for e in events] == ["E00002", "E00001"]
        assert events[0].source == EventSource.FED
        assert events[0].description == "FOMC statement, January"

    def test_explicit_ids(self):
        events = parse_event_list([
            "timestamp,source,description,event_id",
            "2014-02-01T12:45:00Z,GOV,Budget,budget-2014",
        ])
        assert events[0].event_id == "budget-2014"

    def test_unquoted_comma_in_description(self):
        with pytest.raises(EventListError, match="malformed CSV at row 3") as info:
            parse_event_list([
                "timestamp,source,description",
                "2014-02-01T12:45:00Z,ECB,Rate decision",
                "2014-02-02T12:45:00Z,FED,FOMC statement, January",
            ])
        assert info.value.row == 3

    def test_unknown_source(self):
        with pytest.raises(EventListError, match="unknown source 'IMF' at row 3"):
            parse_event_list([
                "timestamp,source,description",
                "2014-02-01T12:45:00Z,ECB,Rate decision",
                "2014-02-02T12:45:00Z,IMF,Outlook",
            ])

    def test_duplicate_ids(self):
        with pytest.raises(EventListError, match="duplicate event id"):
            parse_event_list([
                "timestamp,source,description,event_id",
                "2014-02-01T12:45:00Z,ECB,a,X",
                "2014-02-02T12:45:00Z,FED,b,X",
            ])


class TestDeletionAudit:
    """Audit parsing and application."""

    @pytest.fixture
    def tweets(self, make_tweet):
        return [
            make_tweet("1", ts="2014-03-01T10:00:00Z"),
            make_tweet("2", ts="2014-03-01T11:00:00Z"),
            make_tweet("3", ts="2014-03-01T12:00:00Z"),
        ]

    @staticmethod
    def entry(tweet_id: str, alive: bool, checked: str = "2014-06-01T00:00:00Z") -> DeletionAuditEntry:
        return DeletionAuditEntry(tweet_id=tweet_id, alive=alive, checked_at=utc(checked))

    def test_parse_accepts_repeated_ids(self):
        entries, errors = parse_deletion_audit([
            '{"id": "1", "alive": false, "checked_at": "2014-06-01T00:00:00Z"}',
            '{"id": "1", "alive": false, "checked_at": "2014-07-01T00:00:00Z"}',
            '{"id": "2"}',
        ])
        assert [e.tweet_id for e in entries] == ["1", "1"]
        assert [e.line for e in errors] == [3]

    def test_empty_audit(self, tweets):
        assert parse_deletion_audit([]) == ([], [])
        assert apply_deletion_audit(tweets, []) == (tweets, [])

    def test_applying_twice_changes_nothing(self, tweets):
        audit = [
            self.entry("1", True),
            self.entry("2", False),
            self.entry("2", False, "2014-07-01T00:00:00Z"),
            self.entry("9", False),
        ]
        once, _ = apply_deletion_audit(tweets, audit)
        twice, unmatched = apply_deletion_audit(once, audit)
        assert twice == once
        assert unmatched == ["9"]
        assert [t.deleted for t in twice] == [False, True, False]

    def test_marks_deleted(self, tweets):
        updated, unmatched = apply_deletion_audit(
            tweets, [self.entry("2", False), self.entry("3", True), self.entry("9", False)]
        )
        assert [t.deleted for t in updated] == [False, True, False]
        assert updated[1].audit_time == utc("2014-06-01T00:00:00Z")
        assert unmatched == ["9"]
        assert deleted_fraction(updated) == pytest.approx(1 / 3)

    def test_conflict_lists_ids(self, tweets):
        with pytest.raises(AuditConflictError) as info:
            apply_deletion_audit(tweets, [
                self.entry("3", True), self.entry("3", False, "2014-07-01T00:00:00Z"),
                self.entry("1", False), self.entry("1", True),
            ])
        assert info.value.ids == ["1", "3"]

    def test_latest_wins(self, tweets):
        updated, _ = apply_deletion_audit(
            tweets,
            [self.entry("3", True), self.entry("3", False, "2014-07-01T00:00:00Z")],
            latest_wins=True,
        )
        assert updated[2].deleted
        assert updated[2].audit_time == utc("2014-07-01T00:00:00Z")

    def test_latest_wins_tie_is_still_a_conflict(self, tweets):
        with pytest.raises(AuditConflictError):
            apply_deletion_audit(
                tweets, [self.entry("3", True), self.entry("3", False)], latest_wins=True
            )

    def test_check_before_posting(self, tweets):
        with pytest.raises(AuditConflictError, match="before the tweet was posted"):
            apply_deletion_audit(tweets, [self.entry("1", False, "2014-02-01T00:00:00Z")])
