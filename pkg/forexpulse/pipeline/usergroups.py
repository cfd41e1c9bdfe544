"""Stage 3: User Groups - Activity profiles and rule-based account groups."""

import configparser
import json
import logging
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import pandas as pd
from pydantic import ValidationError

from forexpulse.errors import ConfigError, DataError, ForeignAuthorError, MissingProfileError
from forexpulse.models.schemas import (
    GROUP_ORDER,
    STANCE_ORDER,
    GroupReport,
    GroupRuleConfig,
    GroupShare,
    Stance,
    TweetRecord,
    UserGroup,
    UserProfile,
)

logger = logging.getLogger(__name__)

RULE_KEYS = (
    "bot_rate",
    "spam_tweets",
    "spam_retweeted_ratio",
    "company_days",
    "company_t_rate",
    "company_retweeted_ratio",
    "individual_days",
    "individual_retweeted_ratio",
)
PATTERN_SECTION = "patterns"


def _split_pattern_section(text: str) -> tuple[str, list[tuple[int, str]]]:
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if line.strip() == f"[{PATTERN_SECTION}]":
            return "\n".join(lines[:i]) + "\n", list(enumerate(lines[i + 1:], start=i + 2))
    return text, []


def _parse_patterns(numbered: Iterable[tuple[int, str]], source: str) -> list[str]:
    patterns: list[str] = []
    for line_no, raw in numbered:
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith('"'):
            try:
                line = json.loads(line)
            except json.JSONDecodeError as e:
                raise ConfigError(
                    f"{source}: line {line_no}: bad quoted pattern: {e.msg}", module="usergroups"
                ) from None
        if line in patterns:
            raise ConfigError(
                f"{source}: line {line_no}: duplicate pattern {line!r}", module="usergroups"
            )
        patterns.append(line)
    return patterns


def _pattern_line(pattern: str) -> str:
    if pattern != pattern.strip() or pattern.startswith(("#", ";", '"', "[")):
        return json.dumps(pattern, ensure_ascii=False)
    return pattern


def parse_group_rules(text: str, source: str = "<string>") -> GroupRuleConfig:
    """
    Parse the ``key = value`` rule format.

    Threshold keys may appear before any section header; bot prefixes are
    listed one per line under ``[patterns]``, which must be the last
    section. Pattern lines are taken literally, ``=`` included; a prefix
    with surrounding spaces or a leading ``#``, ``;``, ``"`` or ``[`` is
    written as a double-quoted JSON string.
    """
    parser = configparser.ConfigParser(
        allow_no_value=True,
        delimiters=("=",),
        comment_prefixes=("#", ";"),
        interpolation=None,
    )
    parser.optionxform = str
    thresholds, pattern_lines = _split_pattern_section(text)
    if not thresholds.lstrip().startswith("["):
        thresholds = "[thresholds]\n" + thresholds
    try:
        parser.read_string(thresholds, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}", module="usergroups") from e

    values: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key not in RULE_KEYS:
                raise ConfigError(f"{source}: unknown rule key {key!r}", module="usergroups")
            if value is None:
                raise ConfigError(f"{source}: rule key {key!r} has no value", module="usergroups")
            values[key] = value

    patterns = _parse_patterns(pattern_lines, source)
    try:
        return GroupRuleConfig(bot_patterns=patterns, **values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"{source}: {problems}", module="usergroups") from e


def load_group_rules(path: Path) -> GroupRuleConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"group rule file not found: {path}", module="usergroups")
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path}: invalid UTF-8 ({e.reason})", module="usergroups") from None
    return parse_group_rules(text, source=str(path))


def dump_group_rules(config: GroupRuleConfig) -> str:
    lines = [f"{key} = {getattr(config, key)}" for key in RULE_KEYS]
    lines += ["", f"[{PATTERN_SECTION}]", *(_pattern_line(p) for p in config.bot_patterns)]
    return "\n".join(lines) + "\n"


def matches_bot_pattern(text: str, patterns: Sequence[str]) -> bool:
    return text.lstrip().startswith(tuple(patterns))


def build_profile(tweets_of_user: Sequence[TweetRecord], config: GroupRuleConfig) -> UserProfile:
    """
    Count one author's activity.

    Args:
        tweets_of_user: Every tweet of the author, any order
        config: Rule config providing the bot prefixes

    Returns:
        UserProfile with calendar-span days_active
    """
    if not tweets_of_user:
        raise DataError("cannot build a profile from zero tweets", module="usergroups")
    author_id = tweets_of_user[0].author_id
    for tweet in tweets_of_user:
        if tweet.author_id != author_id:
            raise ForeignAuthorError(author_id, tweet.author_id, tweet.id)

    dates = [t.timestamp.date() for t in tweets_of_user]
    return UserProfile(
        author_id=author_id,
        tweets=len(tweets_of_user),
        days_active=(max(dates) - min(dates)).days + 1,
        retweeted=sum(1 for t in tweets_of_user if t.retweet_count > 0),
        bot_pattern_tweets=sum(
            1 for t in tweets_of_user if matches_bot_pattern(t.text, config.bot_patterns)
        ),
    )


def build_profiles(tweets: Iterable[TweetRecord], config: GroupRuleConfig) -> list[UserProfile]:
    """Profiles of every author, sorted by author id."""
    by_author: dict[str, list[TweetRecord]] = defaultdict(list)
    for tweet in tweets:
        by_author[tweet.author_id].append(tweet)
    profiles = [build_profile(by_author[a], config) for a in sorted(by_author)]
    logger.info("Built %d user profiles", len(profiles))
    return profiles


def classify_user(p: UserProfile, config: GroupRuleConfig) -> UserGroup:
    """First matching rule wins: robot, spammer, company, individual, other."""
    if p.t_bot_rate > config.bot_rate:
        return UserGroup.TRADING_ROBOT
    if p.tweets > config.spam_tweets and p.retweeted_ratio < config.spam_retweeted_ratio:
        return UserGroup.SPAMMER
    if (
        p.days_active > config.company_days
        and p.t_rate > config.company_t_rate
        and p.retweeted_ratio > config.company_retweeted_ratio
    ):
        return UserGroup.TRADING_COMPANY
    if p.days_active > config.individual_days and p.retweeted_ratio > config.individual_retweeted_ratio:
        return UserGroup.INDIVIDUAL_TRADER
    return UserGroup.OTHER


def assign_groups(profiles: Iterable[UserProfile], config: GroupRuleConfig) -> dict[str, UserGroup]:
    assignments = {p.author_id: classify_user(p, config) for p in profiles}
    counts = Counter(assignments.values())
    logger.info(
        "User groups: %s",
        ", ".join(f"{g.value}={counts.get(g, 0)}" for g in GROUP_ORDER),
    )
    return assignments


def group_report(
    profiles: Sequence[UserProfile],
    tweets: Sequence[TweetRecord],
    stances: Mapping[str, Stance],
    config: GroupRuleConfig,
) -> GroupReport:
    """
    User share, tweet share and stance distribution per group.

    Args:
        profiles: One profile per author
        tweets: The corpus
        stances: Predicted stance per tweet id
        config: Rule thresholds

    Returns:
        GroupReport with a row for every group, zeros included
    """
    assignments = assign_groups(profiles, config)
    missing = {t.author_id for t in tweets} - assignments.keys()
    if missing:
        raise MissingProfileError(missing)

    users = Counter(assignments.values())
    tweet_counts: Counter = Counter()
    stance_counts: dict[UserGroup, Counter] = defaultdict(Counter)
    for tweet in tweets:
        if tweet.id not in stances:
            raise DataError(f"no stance for tweet {tweet.id}", module="usergroups")
        group = assignments[tweet.author_id]
        tweet_counts[group] += 1
        stance_counts[group][stances[tweet.id]] += 1

    total_users = len(assignments)
    total_tweets = len(tweets)
    rows = []
    for group in GROUP_ORDER:
        n_tweets = tweet_counts[group]
        shares = {
            s.value: (stance_counts[group][s] / n_tweets if n_tweets else 0.0)
            for s in STANCE_ORDER
        }
        rows.append(GroupShare(
            group=group,
            users=users[group],
            user_share=users[group] / total_users if total_users else 0.0,
            tweets=n_tweets,
            tweet_share=n_tweets / total_tweets if total_tweets else 0.0,
            **shares,
        ))
    return GroupReport(assignments=assignments, rows=rows)


def profiles_frame(profiles: Sequence[UserProfile], assignments: Mapping[str, UserGroup]) -> pd.DataFrame:
    columns = [
        "author_id", "group", "tweets", "days_active", "retweeted",
        "bot_pattern_tweets", "t_rate", "retweeted_ratio", "t_bot_rate",
    ]
    records = [
        {**p.model_dump(), "group": assignments[p.author_id].value}
        for p in profiles
    ]
    return pd.DataFrame.from_records(records, columns=columns)


def report_frame(report: GroupReport) -> pd.DataFrame:
    columns = ["group", "users", "user_share", "tweets", "tweet_share", "buy", "hold", "sell"]
    return pd.DataFrame.from_records(
        [r.model_dump(mode="json") for r in report.rows], columns=columns
    )
