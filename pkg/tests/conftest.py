"""Shared fixtures for the pipeline test suite."""

from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import pytest

from forexpulse.config import DEFAULT_GROUP_RULES
from forexpulse.models.schemas import GroupRuleConfig, SyntheticSpec, TweetRecord
from forexpulse.pipeline.usergroups import load_group_rules
from forexpulse.services.synthetic import SyntheticCorpus, generate_synthetic, write_synthetic


def utc(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


@pytest.fixture
def make_tweet() -> Callable[..., TweetRecord]:
    """Factory for tweet records with sensible defaults."""

    def _make(id: str, author: str = "a1", ts: str = "2014-03-01T10:00:00Z", text: str = "EURUSD", **kwargs):
        return TweetRecord(id=id, author_id=author, timestamp=utc(ts), text=text, **kwargs)

    return _make


@pytest.fixture(scope="session")
def rules() -> GroupRuleConfig:
    return load_group_rules(DEFAULT_GROUP_RULES)


@pytest.fixture(scope="session")
def small_spec() -> SyntheticSpec:
    """A corpus small enough for unit tests but with every planted scenario."""
    return SyntheticSpec(
        seed=7,
        robots=1,
        spammers=1,
        companies=2,
        individuals=3,
        others=2,
        robot_tweets=40,
        events=6,
        history_minutes=600,
        horizon=240,
        drift_minutes=100,
        noise_sigma=0.0,
    )


@pytest.fixture(scope="session")
def small_corpus(small_spec: SyntheticSpec) -> SyntheticCorpus:
    return generate_synthetic(small_spec)


@pytest.fixture(scope="session")
def synthetic_dir(small_corpus: SyntheticCorpus, tmp_path_factory: pytest.TempPathFactory) -> Path:
    """The small corpus written as fixture archives."""
    out = tmp_path_factory.mktemp("synthetic")
    write_synthetic(small_corpus, out)
    return out
