"""Pydantic models for all records and reports in the analytics pipeline."""

from datetime import datetime, timezone
from enum import Enum
from typing import Annotated, Any, Optional

from pydantic import (
    AfterValidator,
    AliasChoices,
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    computed_field,
    field_validator,
    model_validator,
)

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def to_utc_second(value: datetime) -> datetime:
    """Normalize to an aware UTC instant truncated to the second."""
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(value: datetime) -> str:
    return to_utc_second(value).strftime(TIMESTAMP_FORMAT)


def _coerce_id(value: Any) -> Any:
    # Archives in the wild carry numeric ids; bool is an int subclass and stays invalid.
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    return value


UtcInstant = Annotated[
    datetime,
    AfterValidator(to_utc_second),
    PlainSerializer(format_timestamp, return_type=str),
]
RecordId = Annotated[str, BeforeValidator(_coerce_id), Field(min_length=1)]


class Stance(str, Enum):
    """Trading stance of a tweet toward EUR vs. USD, ordered Sell < Hold < Buy."""
    BUY = "buy"
    HOLD = "hold"
    SELL = "sell"

    @property
    def ordinal(self) -> int:
        return _STANCE_ORDINAL[self]

    def __lt__(self, other: "Stance") -> bool:  # type: ignore[override]
        if not isinstance(other, Stance):
            return NotImplemented
        return self.ordinal < other.ordinal

    def __le__(self, other: "Stance") -> bool:  # type: ignore[override]
        if not isinstance(other, Stance):
            return NotImplemented
        return self.ordinal <= other.ordinal

    def __gt__(self, other: "Stance") -> bool:  # type: ignore[override]
        if not isinstance(other, Stance):
            return NotImplemented
        return self.ordinal > other.ordinal

    def __ge__(self, other: "Stance") -> bool:  # type: ignore[override]
        if not isinstance(other, Stance):
            return NotImplemented
        return self.ordinal >= other.ordinal


_STANCE_ORDINAL = {Stance.SELL: -1, Stance.HOLD: 0, Stance.BUY: 1}

# Row/column order of every confusion matrix and per-class table.
STANCE_ORDER: tuple[Stance, ...] = (Stance.BUY, Stance.HOLD, Stance.SELL)


class UserGroup(str, Enum):
    """Twitter user groups, in rule precedence order."""
    TRADING_ROBOT = "robot"
    SPAMMER = "spammer"
    TRADING_COMPANY = "company"
    INDIVIDUAL_TRADER = "individual"
    OTHER = "other"


GROUP_ORDER: tuple[UserGroup, ...] = tuple(UserGroup)


class EventSource(str, Enum):
    """Announcing institution."""
    ECB = "ECB"
    FED = "FED"
    GOV = "GOV"


# Ingest records
class TweetRecord(BaseModel):
    """One collected tweet."""
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="ignore")

    id: RecordId
    author_id: RecordId = Field(
        validation_alias=AliasChoices("author_id", "user_id"),
        serialization_alias="user_id",
    )
    timestamp: UtcInstant
    text: str
    is_retweet: bool = False
    retweet_of: Optional[RecordId] = None
    retweet_count: int = Field(default=0, ge=0)
    gold_label: Optional[Stance] = None
    deleted: bool = False
    audit_time: Optional[UtcInstant] = None

    @model_validator(mode="after")
    def _retweet_consistency(self) -> "TweetRecord":
        if self.is_retweet and self.retweet_of is None:
            raise ValueError("retweet without retweet_of")
        if not self.is_retweet and self.retweet_of is not None:
            raise ValueError("retweet_of set on a tweet that is not a retweet")
        return self


class ParseError(BaseModel):
    """A rejected input line."""
    model_config = ConfigDict(frozen=True)

    line: int = Field(..., ge=1)
    reason: str


class AnnouncementEvent(BaseModel):
    """A central-bank or government announcement."""
    model_config = ConfigDict(frozen=True)

    event_id: RecordId
    timestamp: UtcInstant
    source: EventSource
    description: str = ""


class DeletionAuditEntry(BaseModel):
    """Result of re-checking one collected tweet id."""
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="ignore")

    tweet_id: RecordId = Field(
        validation_alias=AliasChoices("id", "tweet_id"),
        serialization_alias="id",
    )
    alive: bool
    checked_at: UtcInstant


# User groups
class GroupRuleConfig(BaseModel):
    """Thresholds and bot prefixes for the user-group rules."""
    model_config = ConfigDict(frozen=True)

    bot_patterns: list[str] = Field(..., min_length=1)
    bot_rate: float = Field(default=0.75, ge=0.0)
    spam_tweets: int = Field(default=1000, ge=0)
    spam_retweeted_ratio: float = Field(default=0.01, ge=0.0)
    company_days: int = Field(default=30, ge=0)
    company_t_rate: float = Field(default=0.5, ge=0.0)
    company_retweeted_ratio: float = Field(default=0.25, ge=0.0)
    individual_days: int = Field(default=30, ge=0)
    individual_retweeted_ratio: float = Field(default=0.05, ge=0.0)

    @field_validator("bot_patterns")
    @classmethod
    def _nonempty_patterns(cls, patterns: list[str]) -> list[str]:
        if any(not p.strip() for p in patterns):
            raise ValueError("bot patterns must be nonempty")
        return patterns


class UserProfile(BaseModel):
    """Activity counts of one author."""
    model_config = ConfigDict(frozen=True)

    author_id: str
    tweets: int = Field(..., ge=1)
    days_active: int = Field(..., ge=1)
    retweeted: int = Field(default=0, ge=0)
    bot_pattern_tweets: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _counts_bounded(self) -> "UserProfile":
        if self.retweeted > self.tweets or self.bot_pattern_tweets > self.tweets:
            raise ValueError("sub-counts exceed the tweet count")
        return self

    @computed_field
    @property
    def t_rate(self) -> float:
        return self.tweets / self.days_active

    @computed_field
    @property
    def retweeted_ratio(self) -> float:
        return self.retweeted / self.tweets

    @computed_field
    @property
    def t_bot_rate(self) -> float:
        return self.bot_pattern_tweets / self.tweets


class ClassifiedTweet(BaseModel):
    """A tweet with its predicted stance and its author's group."""
    model_config = ConfigDict(frozen=True)

    tweet: TweetRecord
    stance: Stance
    group: UserGroup


class GroupShare(BaseModel):
    """One row of the group report."""
    group: UserGroup
    users: int
    user_share: float
    tweets: int
    tweet_share: float
    buy: float
    hold: float
    sell: float


class GroupReport(BaseModel):
    """User/tweet shares and stance distribution per group."""
    assignments: dict[str, UserGroup]
    rows: list[GroupShare]

    def row(self, group: UserGroup) -> GroupShare:
        return next(r for r in self.rows if r.group == group)


# Stance model evaluation
class FoldResult(BaseModel):
    fold: int
    test_start: int
    test_end: int
    train_size: int
    accuracy: float = Field(..., ge=0.0, le=1.0)
    f1_buy_sell: float = Field(..., ge=0.0, le=1.0)


class EvalReport(BaseModel):
    """Blocked cross-validation result."""
    folds: list[FoldResult]
    accuracy_mean: float
    accuracy_std: float
    f1_mean: float
    f1_std: float
    pooled_accuracy: float
    pooled_f1_buy_sell: float
    labels: list[Stance] = Field(default_factory=lambda: list(STANCE_ORDER))
    confusion: list[list[int]]
    label_counts: dict[str, int]
    params: dict[str, Any] = Field(default_factory=dict)
    notes: list[str] = Field(default_factory=list)


# Event study
class MarketModel(BaseModel):
    """Linear trend fitted over the estimation window before an event."""
    model_config = ConfigDict(frozen=True)

    slope: float
    intercept: float
    window_start: UtcInstant
    window_end: UtcInstant
    n_points: int = Field(..., ge=2)


class EventClassification(BaseModel):
    """Stance counts in the hour after an event and the resulting label."""
    model_config = ConfigDict(frozen=True)

    event_id: str
    n_buy: int = 0
    n_hold: int = 0
    n_sell: int = 0
    label: Stance
    window_start: UtcInstant
    window_end: UtcInstant

    @computed_field
    @property
    def score(self) -> int:
        return self.n_buy - self.n_sell


class EventDetail(BaseModel):
    """Per-event row of the study detail table."""
    group: str
    event_id: str
    timestamp: UtcInstant
    source: EventSource
    n_buy: int
    n_hold: int
    n_sell: int
    score: int
    label: Stance
    k: Optional[float] = None
    n_points: Optional[int] = None
    lags: Optional[int] = None
    skip_reason: Optional[str] = None


# Deletion forensics
class TypoRuleConfig(BaseModel):
    """A deleted tweet is a typo when a near-identical tweet follows it closely."""
    model_config = ConfigDict(frozen=True)

    max_following: int = Field(default=3, ge=1)
    min_distance: int = Field(default=1, ge=0)
    max_distance: int = Field(default=4, ge=1)
    normalize_urls: bool = True

    @model_validator(mode="after")
    def _bounds(self) -> "TypoRuleConfig":
        if self.max_distance - self.min_distance < 2:
            raise ValueError("exclusive distance bounds leave no admissible distance")
        return self


DEFAULT_LEXICON = [
    "long", "short", "bear", "bull", "bearish", "bullish",
    "resistance", "support", "buy", "sell", "close",
]


class RecommendationLexicon(BaseModel):
    """Trading vocabulary marking a tweet as a recommendation."""
    model_config = ConfigDict(frozen=True)

    words: list[str] = Field(default_factory=lambda: list(DEFAULT_LEXICON), min_length=1)

    @field_validator("words")
    @classmethod
    def _canonical(cls, words: list[str]) -> list[str]:
        canonical = [w.strip().lower() for w in words]
        if any(not w for w in canonical):
            raise ValueError("lexicon words must be nonempty")
        return canonical


class RepostCluster(BaseModel):
    """Repeated deletions of one text by one author."""
    model_config = ConfigDict(frozen=True)

    author_id: str
    text: str
    count: int = Field(..., ge=2)
    tweet_ids: list[str]


class TypoMatch(BaseModel):
    model_config = ConfigDict(frozen=True)

    deleted_id: str
    replacement_id: str


class DeletionCategory(str, Enum):
    """Breakdown categories, in assignment order."""
    REPOST = "repost"
    TYPO = "typo"
    RETWEET = "retweet"
    RECOMMENDATION = "recommendation"
    UNEXPLAINED = "unexplained"


class DeletionBreakdown(BaseModel):
    """Partition of the deleted tweets into explanation categories."""
    total_deleted: int
    unique_deleted: int
    repost_clusters: list[RepostCluster] = Field(default_factory=list)
    repost_ids: list[str] = Field(default_factory=list)
    typo_deletions: list[TypoMatch] = Field(default_factory=list)
    deleted_retweet_ids: list[str] = Field(default_factory=list)
    recommendation_deletions: list[str] = Field(default_factory=list)
    unexplained_ids: list[str] = Field(default_factory=list)
    unexplained_with_links: int = 0

    @computed_field
    @property
    def deleted_retweets(self) -> int:
        return len(self.deleted_retweet_ids)

    @computed_field
    @property
    def unexplained(self) -> int:
        return len(self.unexplained_ids)

    @computed_field
    @property
    def reposted_once(self) -> int:
        return sum(1 for c in self.repost_clusters if c.count == 2)

    @computed_field
    @property
    def reposted_several(self) -> int:
        return sum(1 for c in self.repost_clusters if c.count > 2)

    def category_counts(self) -> dict[DeletionCategory, int]:
        return {
            DeletionCategory.REPOST: len(self.repost_ids),
            DeletionCategory.TYPO: len(self.typo_deletions),
            DeletionCategory.RETWEET: len(self.deleted_retweet_ids),
            DeletionCategory.RECOMMENDATION: len(self.recommendation_deletions),
            DeletionCategory.UNEXPLAINED: len(self.unexplained_ids),
        }


# Synthetic fixtures
class SyntheticSpec(BaseModel):
    """Parameters of a generated fixture corpus; the seed fixes every byte."""
    seed: int = 42
    robots: int = Field(default=3, ge=0)
    spammers: int = Field(default=2, ge=0)
    companies: int = Field(default=4, ge=0)
    individuals: int = Field(default=6, ge=0)
    others: int = Field(default=3, ge=0)
    robot_tweets: int = Field(default=120, ge=1)
    robot_bot_rate: float = Field(default=1.0, ge=0.0, le=1.0)
    spam_tweets: int = Field(default=1005, ge=1)
    events: int = Field(default=30, ge=0)
    event_spacing_days: int = Field(default=32, ge=1)
    history_minutes: int = Field(default=1440, ge=2)
    horizon: int = Field(default=1440, ge=1)
    drift: float = Field(default=0.001, ge=0.0)
    drift_minutes: Optional[int] = Field(default=None, ge=1)
    noise_sigma: float = Field(default=0.0002, ge=0.0)
    base_price: float = Field(default=1.10, gt=0.0)
    trend_per_minute: float = -1e-8
    stance_tweets_per_event: int = Field(default=4, ge=1)
    labeled_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    repost_clusters: int = Field(default=4, ge=0)
    typos: int = Field(default=5, ge=0)
    deleted_retweets: int = Field(default=3, ge=0)
    recommendations: int = Field(default=6, ge=0)
    other_deletions: int = Field(default=7, ge=0)

    @property
    def effective_drift_minutes(self) -> int:
        return self.drift_minutes or self.horizon


class GroundTruth(BaseModel):
    """Every fact planted by the generator."""
    seed: int
    user_groups: dict[str, UserGroup]
    event_labels: dict[str, Stance]
    planted_car: dict[Stance, float]
    drift_minutes: int
    horizon: int
    deleted_total: int
    repost_clusters: list[RepostCluster]
    repost_ids: list[str]
    typo_deletions: list[TypoMatch]
    deleted_retweet_ids: list[str]
    recommendation_ids: list[str]
    unexplained_ids: list[str]
