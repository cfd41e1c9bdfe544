"""Seeded fixture corpus with planted user groups, event drifts and deletion scenarios."""

import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from forexpulse.errors import ConfigError, DataError
from forexpulse.models.schemas import (
    AnnouncementEvent,
    ClassifiedTweet,
    DeletionAuditEntry,
    DeletionBreakdown,
    EventSource,
    GroundTruth,
    GroupRuleConfig,
    RecommendationLexicon,
    RepostCluster,
    Stance,
    SyntheticSpec,
    TweetRecord,
    TypoMatch,
    TypoRuleConfig,
    UserGroup,
    format_timestamp,
)
from forexpulse.models.series import RateSeries, epoch_seconds, from_epoch_seconds
from forexpulse.pipeline.ingest import serialize_audit_entry, serialize_tweet
from forexpulse.pipeline.manipulation import deletion_breakdown
from forexpulse.pipeline.usergroups import assign_groups, build_profiles, load_group_rules
from forexpulse.services.knowledge_base import get_knowledge_base
from forexpulse.services.report_writer import write_csv, write_json, write_lines

logger = logging.getLogger(__name__)

CORPUS_START = datetime(2014, 1, 1, tzinfo=timezone.utc)
AUDIT_DELAY = timedelta(days=7)
STANCE_WINDOW_MINUTES = (1, 55)
OTHER_SPAN_MINUTES = 3 * 1440
SPAM_SPAN_MINUTES = 10 * 1440
MAX_REDRAWS = 50


@dataclass
class _Draft:
    author_id: str
    second: int
    text: str
    stance: Stance
    role: str = ""
    plant: int = -1
    is_retweet: bool = False
    retweet_of: Optional[str] = None
    labeled: bool = False
    deleted: bool = False
    retweet_count: int = 0
    id: str = ""


@dataclass
class SyntheticCorpus:
    """A generated corpus with the deletion audit already applied."""
    spec: SyntheticSpec
    tweets: list[TweetRecord]
    audit: list[DeletionAuditEntry]
    rates: RateSeries
    events: list[AnnouncementEvent]
    stances: dict[str, Stance]
    ground_truth: GroundTruth
    breakdown: DeletionBreakdown = field(repr=False, default=None)

    def classified(self) -> list[ClassifiedTweet]:
        """Tweets with their planted stance and author group."""
        groups = self.ground_truth.user_groups
        return [
            ClassifiedTweet(tweet=t, stance=self.stances[t.id], group=groups[t.author_id])
            for t in self.tweets
        ]

    def archived_tweets(self) -> list[TweetRecord]:
        """Tweets as collected, before the audit marked deletions."""
        return [t.model_copy(update={"deleted": False, "audit_time": None}) for t in self.tweets]


def check_feasible(spec: SyntheticSpec, rules: GroupRuleConfig, window_days: int) -> None:
    """Reject specs whose planted facts would not survive the analysis rules."""
    problems = []
    bot_tweets = math.ceil(spec.robot_bot_rate * spec.robot_tweets)
    if spec.robots and not bot_tweets / spec.robot_tweets > rules.bot_rate:
        problems.append(f"robot_bot_rate must exceed {rules.bot_rate}")
    if spec.spammers and not spec.spam_tweets > rules.spam_tweets:
        problems.append(f"spam_tweets must exceed {rules.spam_tweets}")
    span_days = max(spec.events, 1) * spec.event_spacing_days
    if span_days <= max(rules.company_days, rules.individual_days) + 1:
        problems.append("corpus span too short for company and individual accounts")
    segment = spec.history_minutes + spec.horizon
    if spec.event_spacing_days * 1440 <= max(window_days * 1440 + spec.horizon, segment + 120):
        problems.append(
            f"event_spacing_days must leave the {window_days}-day regression window "
            "clear of the previous event"
        )
    if spec.events and spec.companies + spec.individuals == 0:
        problems.append("events need company or individual accounts to type them")
    deletions = (
        spec.repost_clusters + spec.typos + spec.deleted_retweets
        + spec.recommendations + spec.other_deletions
    )
    if deletions and not spec.companies:
        problems.append("deletion scenarios need at least one company account")
    if problems:
        raise ConfigError("; ".join(problems), module="synthetic")


class _Builder:
    def __init__(
        self,
        spec: SyntheticSpec,
        templates: dict,
        rules: GroupRuleConfig,
        lexicon: RecommendationLexicon,
        typo_config: TypoRuleConfig,
    ):
        self.spec = spec
        self.templates = templates
        self.rules = rules
        self.lexicon = lexicon
        self.typo_config = typo_config
        self.rng = np.random.default_rng(spec.seed)
        self.tags = itertools.count(1)
        self.start = epoch_seconds(CORPUS_START)
        self.span_minutes = max(spec.events, 1) * spec.event_spacing_days * 1440
        self.drafts: list[_Draft] = []
        self.used: dict[str, set[int]] = defaultdict(set)
        self.groups: dict[str, UserGroup] = {}
        self.event_seconds = np.array(
            [
                self.start + 60 * (j * spec.event_spacing_days * 1440 + spec.history_minutes)
                for j in range(spec.events)
            ],
            dtype=np.int64,
        )

    # Text and time helpers
    def _fill(self, options: Sequence[str]) -> str:
        template = options[int(self.rng.integers(len(options)))]
        tag = next(self.tags)
        price = self.spec.base_price + 0.005 * float(self.rng.standard_normal())
        return template.format(n=tag, price=f"{price:.4f}", url=f"https://fx.example.com/p/{tag}")

    def text(self, pool: str) -> str:
        return self._fill(self.templates[pool])

    def stance_text(self, stance: Stance) -> str:
        return self._fill(self.templates["stance"][stance.value])

    def _near_event(self, second: int) -> bool:
        i = int(np.searchsorted(self.event_seconds, second + 60, side="right")) - 1
        return i >= 0 and second < self.event_seconds[i] + 3660

    def quiet_second(self, author: str, lo: int = 0, hi: Optional[int] = None) -> int:
        """A free whole minute of ``author`` outside every event window."""
        hi = self.span_minutes if hi is None else hi
        while True:
            minute = int(self.rng.integers(lo, hi))
            second = self.start + 60 * minute
            if minute in self.used[author] or self._near_event(second):
                continue
            self.used[author].add(minute)
            return second

    def add(self, author: str, second: int, text: str, stance: Stance, **kwargs) -> _Draft:
        draft = _Draft(author_id=author, second=second, text=text, stance=stance, **kwargs)
        self.drafts.append(draft)
        return draft

    def labeled(self) -> bool:
        return bool(self.rng.random() < self.spec.labeled_fraction)

    # Accounts
    def accounts(self) -> None:
        spec = self.spec
        plan = [
            (UserGroup.TRADING_ROBOT, spec.robots),
            (UserGroup.SPAMMER, spec.spammers),
            (UserGroup.TRADING_COMPANY, spec.companies),
            (UserGroup.INDIVIDUAL_TRADER, spec.individuals),
            (UserGroup.OTHER, spec.others),
        ]
        index = itertools.count(1)
        for group, count in plan:
            for _ in range(count):
                self.groups[f"u{next(index):04d}"] = group

    def members(self, group: UserGroup) -> list[str]:
        return [a for a, g in self.groups.items() if g == group]

    def robots(self) -> None:
        spec = self.spec
        patterns = self.rules.bot_patterns
        bot_tweets = math.ceil(spec.robot_bot_rate * spec.robot_tweets)
        for author in self.members(UserGroup.TRADING_ROBOT):
            for i in range(spec.robot_tweets):
                second = self.quiet_second(author)
                if i < bot_tweets:
                    pattern = patterns[int(self.rng.integers(len(patterns)))]
                    text = pattern + self.text("robot_tail")
                    stance = Stance.BUY if "Buy" in pattern else Stance.SELL if "Sell" in pattern else Stance.HOLD
                else:
                    text, stance = self.text("filler"), Stance.HOLD
                self.add(author, second, text, stance)

    def spammers(self) -> None:
        for author in self.members(UserGroup.SPAMMER):
            for _ in range(self.spec.spam_tweets):
                second = self.quiet_second(author, 0, SPAM_SPAN_MINUTES)
                self.add(author, second, self.text("spam"), Stance.HOLD)

    def others(self) -> None:
        for author in self.members(UserGroup.OTHER):
            for _ in range(5):
                second = self.quiet_second(author, 0, OTHER_SPAN_MINUTES)
                self.add(author, second, self.text("other"), Stance.HOLD)

    def fillers(self, author: str, count: int) -> None:
        # first and last day anchor the activity span
        days = self.span_minutes // 1440
        bounds = [(0, 1440), ((days - 1) * 1440, days * 1440)]
        bounds += [(0, self.span_minutes)] * max(count - 2, 0)
        for lo, hi in bounds:
            second = self.quiet_second(author, lo, hi)
            self.add(
                author, second, self.stance_text(Stance.HOLD), Stance.HOLD, labeled=self.labeled()
            )

    def traders(self) -> None:
        days = self.span_minutes // 1440
        for author in self.members(UserGroup.TRADING_COMPANY):
            self.fillers(author, math.ceil((self.rules.company_t_rate + 0.1) * days) + 2)
        for author in self.members(UserGroup.INDIVIDUAL_TRADER):
            self.fillers(author, 5)

    # Events and rates
    def event_labels(self) -> list[Stance]:
        cycle = [Stance.BUY, Stance.HOLD, Stance.SELL]
        labels = [cycle[j % 3] for j in range(self.spec.events)]
        order = self.rng.permutation(len(labels))
        return [labels[i] for i in order]

    def stance_tweets(self, labels: Sequence[Stance]) -> None:
        authors = self.members(UserGroup.TRADING_COMPANY) + self.members(UserGroup.INDIVIDUAL_TRADER)
        lo, hi = STANCE_WINDOW_MINUTES
        for event_second, label in zip(self.event_seconds, labels):
            for _ in range(self.spec.stance_tweets_per_event):
                author = authors[int(self.rng.integers(len(authors)))]
                while True:
                    second = int(event_second) + 60 * int(self.rng.integers(lo, hi + 1))
                    minute = (second - self.start) // 60
                    if minute not in self.used[author]:
                        self.used[author].add(minute)
                        break
                self.add(author, second, self.stance_text(label), label, labeled=self.labeled())

    def rates(self, labels: Sequence[Stance]) -> RateSeries:
        spec = self.spec
        history, horizon = spec.history_minutes, spec.horizon
        planted = spec.effective_drift_minutes
        step = spec.noise_sigma * spec.base_price / math.sqrt(horizon)
        minutes = np.arange(history + horizon + 1)
        seconds, prices = [], []
        for event_second, label in zip(self.event_seconds, labels):
            segment_start = int(event_second) - 60 * history
            global_minute = (segment_start - self.start) // 60 + minutes
            baseline = spec.base_price + spec.trend_per_minute * global_minute
            steps = self.rng.normal(0.0, 1.0, size=minutes.size) * step
            steps[0] = 0.0
            path = baseline + np.cumsum(steps)
            r = {Stance.BUY: 1.0, Stance.HOLD: 0.0, Stance.SELL: -1.0}[label] * spec.drift / planted
            lag = np.clip(minutes - history, 0, planted)
            # geometric path: every planted abnormal return equals r
            path = path + path[history] * ((1.0 + r) ** lag - 1.0)
            seconds.append(segment_start + 60 * minutes)
            prices.append(path)
        if not seconds:
            return RateSeries(pair="EURUSD", seconds=np.zeros(0, np.int64), prices=np.zeros(0))
        return RateSeries(pair="EURUSD", seconds=np.concatenate(seconds), prices=np.concatenate(prices))

    def events(self) -> list[AnnouncementEvent]:
        sources = list(EventSource)
        return [
            AnnouncementEvent(
                event_id=f"E{j + 1:05d}",
                timestamp=from_epoch_seconds(int(second)),
                source=sources[int(self.rng.integers(len(sources)))],
                description=f"Policy announcement {j + 1}",
            )
            for j, second in enumerate(self.event_seconds)
        ]

    # Deletion scenarios, all posted by companies between events
    def deletion_slot(self, author: str) -> int:
        return self.quiet_second(author) + 30

    def deletions(self) -> None:
        spec = self.spec
        companies = self.members(UserGroup.TRADING_COMPANY)
        rotation = itertools.cycle(companies)
        for i in range(spec.repost_clusters):
            author = next(rotation)
            text = self.text("advert")
            for _ in range(2 + i % 2):
                self.add(author, self.deletion_slot(author), text, Stance.HOLD,
                         role="repost", plant=i, deleted=True)
            self.add(author, self.deletion_slot(author), text, Stance.HOLD, role="repost_alive", plant=i)
        for i in range(spec.typos):
            author = next(rotation)
            correct = self.text("typo")
            second = self.deletion_slot(author)
            self.add(author, second, self.misspell(correct), Stance.HOLD,
                     role="typo", plant=i, deleted=True)
            self.add(author, second + 20, correct, Stance.HOLD, role="typo_fix", plant=i)
        for i in range(spec.deleted_retweets):
            author = next(rotation)
            self.add(author, self.deletion_slot(author), self.text("retweet"), Stance.HOLD,
                     role="retweet", plant=i, deleted=True, is_retweet=True,
                     retweet_of=f"x{next(self.tags)}")
        for i in range(spec.recommendations):
            author = next(rotation)
            self.add(author, self.deletion_slot(author), self.text("recommendation"), Stance.HOLD,
                     role="recommendation", plant=i, deleted=True)
        for i in range(spec.other_deletions):
            author = next(rotation)
            self.add(author, self.deletion_slot(author), self.text("unexplained"), Stance.HOLD,
                     role="unexplained", plant=i, deleted=True)

    def misspell(self, text: str) -> str:
        """Drop two letters: edit distance exactly 2."""
        letters = [i for i, c in enumerate(text) if c.isalpha()]
        drop = set(int(i) for i in self.rng.choice(letters, size=2, replace=False))
        return "".join(c for i, c in enumerate(text) if i not in drop)

    # Assembly
    def assign_ids(self) -> None:
        self.drafts.sort(key=lambda d: (d.second, d.author_id))
        for index, draft in enumerate(self.drafts, start=1):
            draft.id = f"t{index:07d}"
        for author in self.groups:
            mine = [d for d in self.drafts if d.author_id == author]
            for i, draft in enumerate(mine):
                group = self.groups[author]
                if group == UserGroup.TRADING_COMPANY and i % 5 < 2:
                    draft.retweet_count = 1 + i % 3
                elif group == UserGroup.INDIVIDUAL_TRADER and i % 7 == 0:
                    draft.retweet_count = 1

    @property
    def checked_at(self) -> datetime:
        return from_epoch_seconds(self.start + 60 * self.span_minutes) + AUDIT_DELAY

    def records(self) -> list[TweetRecord]:
        checked_at = self.checked_at
        return [
            TweetRecord(
                id=d.id,
                author_id=d.author_id,
                timestamp=from_epoch_seconds(d.second),
                text=d.text,
                is_retweet=d.is_retweet,
                retweet_of=d.retweet_of,
                retweet_count=d.retweet_count,
                gold_label=d.stance if d.labeled else None,
                deleted=d.deleted,
                audit_time=checked_at if d.deleted else None,
            )
            for d in self.drafts
        ]

    def misplanted(self, breakdown: DeletionBreakdown) -> list[_Draft]:
        """Non-typo deletions the forensics rules would explain differently."""
        found = {i: "repost" for i in breakdown.repost_ids}
        found.update({m.deleted_id: "typo" for m in breakdown.typo_deletions})
        found.update({i: "retweet" for i in breakdown.deleted_retweet_ids})
        found.update({i: "recommendation" for i in breakdown.recommendation_deletions})
        found.update({i: "unexplained" for i in breakdown.unexplained_ids})
        fixes = {d.plant: d.id for d in self.drafts if d.role == "typo_fix"}
        matched = {m.deleted_id: m.replacement_id for m in breakdown.typo_deletions}
        wrong = []
        for draft in self.drafts:
            if not draft.deleted:
                continue
            if draft.role in ("repost", "typo"):
                if found.get(draft.id) != draft.role or (
                    draft.role == "typo" and matched.get(draft.id) != fixes[draft.plant]
                ):
                    raise DataError(f"planted {draft.role} {draft.id} not recovered", module="synthetic")
            elif found.get(draft.id) != draft.role:
                wrong.append(draft)
        return wrong

    def settle(self) -> tuple[list[TweetRecord], DeletionBreakdown]:
        for _ in range(MAX_REDRAWS):
            records = self.records()
            breakdown = deletion_breakdown(records, self.typo_config, self.lexicon)
            wrong = self.misplanted(breakdown)
            if not wrong:
                return records, breakdown
            for draft in wrong:
                logger.debug("Redrawing %s text of %s", draft.role, draft.id)
                draft.text = self.text(draft.role)
        raise DataError("could not plant the deletion scenarios", module="synthetic")

    def verify_groups(self, records: Sequence[TweetRecord]) -> None:
        assigned = assign_groups(build_profiles(records, self.rules), self.rules)
        wrong = sorted(a for a, g in self.groups.items() if assigned.get(a) != g)
        if wrong:
            raise DataError(f"accounts not recovered in their group: {', '.join(wrong)}", module="synthetic")

    def ground_truth(self, labels: Sequence[Stance], breakdown: DeletionBreakdown) -> GroundTruth:
        spec = self.spec
        deleted = [d for d in self.drafts if d.deleted]
        by_role: dict[str, list[_Draft]] = defaultdict(list)
        for draft in deleted:
            by_role[draft.role].append(draft)
        fixes = {d.plant: d.id for d in self.drafts if d.role == "typo_fix"}

        clusters: dict[int, list[_Draft]] = defaultdict(list)
        for draft in by_role["repost"]:
            clusters[draft.plant].append(draft)
        repost_clusters = sorted(
            (
                RepostCluster(
                    author_id=members[0].author_id,
                    text=members[0].text.rstrip(),
                    count=len(members),
                    tweet_ids=[d.id for d in members],
                )
                for members in clusters.values()
            ),
            key=lambda c: (-c.count, c.author_id, c.text),
        )
        return GroundTruth(
            seed=spec.seed,
            user_groups=dict(sorted(self.groups.items())),
            event_labels={f"E{j + 1:05d}": label for j, label in enumerate(labels)},
            planted_car={Stance.BUY: spec.drift, Stance.HOLD: 0.0, Stance.SELL: -spec.drift},
            drift_minutes=spec.effective_drift_minutes,
            horizon=spec.horizon,
            deleted_total=len(deleted),
            repost_clusters=repost_clusters,
            repost_ids=sorted(d.id for d in by_role["repost"]),
            typo_deletions=sorted(
                (TypoMatch(deleted_id=d.id, replacement_id=fixes[d.plant]) for d in by_role["typo"]),
                key=lambda m: m.deleted_id,
            ),
            deleted_retweet_ids=sorted(d.id for d in by_role["retweet"]),
            recommendation_ids=sorted(d.id for d in by_role["recommendation"]),
            unexplained_ids=sorted(d.id for d in by_role["unexplained"]),
        )


def generate_synthetic(
    spec: SyntheticSpec = SyntheticSpec(),
    window_days: int = 30,
    rules: Optional[GroupRuleConfig] = None,
    lexicon: Optional[RecommendationLexicon] = None,
    typo_config: Optional[TypoRuleConfig] = None,
    templates: Optional[dict] = None,
) -> SyntheticCorpus:
    """
    Generate a corpus whose every planted fact is recorded in its ground truth.

    Args:
        spec: Generator parameters; the seed fixes every byte
        window_days: Regression window the events must keep clear
        rules: Group rules the accounts are built to satisfy
        lexicon: Recommendation vocabulary
        typo_config: Typo rule the deletion scenarios are checked against
        templates: Text pools; defaults to knowledge/synthetic_templates.json

    Returns:
        SyntheticCorpus
    """
    knowledge = get_knowledge_base()
    rules = rules or load_group_rules(knowledge.group_rules_path)
    lexicon = lexicon or knowledge.lexicon()
    typo_config = typo_config or TypoRuleConfig()
    check_feasible(spec, rules, window_days)

    builder = _Builder(spec, templates or knowledge.templates(), rules, lexicon, typo_config)
    builder.accounts()
    labels = builder.event_labels()
    rates = builder.rates(labels)
    events = builder.events()
    builder.robots()
    builder.spammers()
    builder.others()
    builder.traders()
    builder.stance_tweets(labels)
    builder.deletions()
    builder.assign_ids()

    tweets, breakdown = builder.settle()
    builder.verify_groups(tweets)
    checked_at = builder.checked_at
    audit = [
        DeletionAuditEntry(tweet_id=t.id, alive=not t.deleted, checked_at=checked_at)
        for t in tweets
    ]
    truth = builder.ground_truth(labels, breakdown)
    logger.info(
        "Synthetic corpus: %d tweets, %d accounts, %d events, %d deletions",
        len(tweets), len(builder.groups), len(events), truth.deleted_total,
    )
    return SyntheticCorpus(
        spec=spec,
        tweets=tweets,
        audit=audit,
        rates=rates,
        events=events,
        stances={d.id: d.stance for d in builder.drafts},
        ground_truth=truth,
        breakdown=breakdown,
    )


def rates_frame(rates: RateSeries) -> pd.DataFrame:
    return pd.DataFrame({
        "timestamp": [format_timestamp(from_epoch_seconds(s)) for s in rates.seconds],
        "price": [repr(float(p)) for p in rates.prices],
    })


def events_frame(events: Sequence[AnnouncementEvent]) -> pd.DataFrame:
    return pd.DataFrame(
        [(format_timestamp(e.timestamp), e.source.value, e.description, e.event_id) for e in events],
        columns=["timestamp", "source", "description", "event_id"],
    )


def write_synthetic(corpus: SyntheticCorpus, out_dir: Path) -> list[Path]:
    """Write the five fixture archives into ``out_dir``."""
    out_dir = Path(out_dir)
    return [
        write_lines(out_dir / "tweets.jsonl", (serialize_tweet(t) for t in corpus.archived_tweets())),
        write_csv(out_dir / "rates.csv", rates_frame(corpus.rates)),
        write_csv(out_dir / "events.csv", events_frame(corpus.events)),
        write_lines(out_dir / "audit.jsonl", (serialize_audit_entry(e) for e in corpus.audit)),
        write_json(out_dir / "ground_truth.json", corpus.ground_truth),
    ]
