"""Stage 5: Manipulation - Deletion forensics and the deletion-aware event study."""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import Levenshtein
import pandas as pd

from forexpulse.errors import DataError, ForeignAuthorError
from forexpulse.models.schemas import (
    STANCE_ORDER,
    AnnouncementEvent,
    ClassifiedTweet,
    DeletionBreakdown,
    RecommendationLexicon,
    RepostCluster,
    Stance,
    TweetRecord,
    TypoMatch,
    TypoRuleConfig,
    UserGroup,
)
from forexpulse.models.series import RateSeries
from forexpulse.pipeline.eventstudy import (
    EventStudyConfig,
    EventStudyResult,
    run_group_studies,
)
from forexpulse.services.text_norm import has_url, letter_words, replace_urls

logger = logging.getLogger(__name__)

# Upper edges in percent; a bin "a-b" holds a < pct <= b, except the last, which is open at 100.
HISTOGRAM_EDGES = (0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
PROFILE_EDGES = (0, 1, 5, 10, 40, 100)
COMPARISON_COLUMNS = ["group", "class", "lag_min", "car_all", "car_excluded", "diff"]


def edit_distance(a: str, b: str) -> int:
    """Unit-cost Levenshtein distance over code points."""
    return Levenshtein.distance(a, b)


def _typo_text(text: str, config: TypoRuleConfig) -> str:
    return replace_urls(text) if config.normalize_urls else text


def detect_typo_deletion(
    deleted: TweetRecord,
    following: Sequence[TweetRecord],
    config: TypoRuleConfig = TypoRuleConfig(),
) -> Optional[str]:
    """
    Find the tweet that corrected a deleted one.

    Args:
        deleted: The deleted tweet
        following: The author's later tweets, oldest first
        config: Window size and exclusive distance bounds

    Returns:
        Id of the first of the next tweets within the distance band, or None
    """
    for tweet in following:
        if tweet.author_id != deleted.author_id:
            raise ForeignAuthorError(deleted.author_id, tweet.author_id, tweet.id)

    base = _typo_text(deleted.text, config)
    for candidate in following[:config.max_following]:
        distance = edit_distance(base, _typo_text(candidate.text, config))
        if config.min_distance < distance < config.max_distance:
            return candidate.id
    return None


def find_repost_clusters(deleted: Sequence[TweetRecord]) -> list[RepostCluster]:
    """Deleted tweets sharing author and text (trailing whitespace ignored)."""
    groups: dict[tuple[str, str], list[str]] = defaultdict(list)
    for tweet in deleted:
        if not tweet.deleted:
            raise DataError(f"tweet {tweet.id} is not deleted", module="manipulation")
        groups[(tweet.author_id, tweet.text.rstrip())].append(tweet.id)

    clusters = [
        RepostCluster(author_id=author, text=text, count=len(ids), tweet_ids=ids)
        for (author, text), ids in groups.items()
        if len(ids) >= 2
    ]
    clusters.sort(key=lambda c: (-c.count, c.author_id, c.text))
    return clusters


def is_recommendation(text: str, lexicon: RecommendationLexicon) -> bool:
    words = set(lexicon.words)
    return any(word in words for word in letter_words(text))


def build_timelines(tweets: Sequence[TweetRecord]) -> dict[str, list[TweetRecord]]:
    """Each author's tweets in time order (input order breaks ties)."""
    timelines: dict[str, list[TweetRecord]] = defaultdict(list)
    for tweet in tweets:
        timelines[tweet.author_id].append(tweet)
    for timeline in timelines.values():
        timeline.sort(key=lambda t: t.timestamp)
    return dict(timelines)


def deletion_breakdown(
    tweets: Sequence[TweetRecord],
    typo_config: TypoRuleConfig = TypoRuleConfig(),
    lexicon: RecommendationLexicon = RecommendationLexicon(),
    author: Optional[str] = None,
) -> DeletionBreakdown:
    """
    Explain every deleted tweet by the first category that applies.

    Order: repost, typo, retweet, recommendation, unexplained.

    Args:
        tweets: Audited corpus
        typo_config: Typo rule parameters
        lexicon: Trading vocabulary
        author: Restrict to one account

    Returns:
        DeletionBreakdown whose categories partition the deleted tweets
    """
    if author is not None:
        tweets = [t for t in tweets if t.author_id == author]
    timelines = build_timelines(tweets)

    deleted: list[tuple[TweetRecord, list[TweetRecord]]] = []
    for author_id in sorted(timelines):
        timeline = timelines[author_id]
        for position, tweet in enumerate(timeline):
            if tweet.deleted:
                deleted.append((tweet, timeline[position + 1:]))

    clusters = find_repost_clusters([t for t, _ in deleted])
    repost_ids = {i for c in clusters for i in c.tweet_ids}

    typos: list[TypoMatch] = []
    retweets: list[str] = []
    recommendations: list[str] = []
    unexplained: list[str] = []
    with_links = 0
    for tweet, following in deleted:
        if tweet.id in repost_ids:
            continue
        replacement = detect_typo_deletion(tweet, following, typo_config)
        if replacement is not None:
            typos.append(TypoMatch(deleted_id=tweet.id, replacement_id=replacement))
        elif tweet.is_retweet:
            retweets.append(tweet.id)
        elif is_recommendation(tweet.text, lexicon):
            recommendations.append(tweet.id)
        else:
            unexplained.append(tweet.id)
            with_links += has_url(tweet.text)

    breakdown = DeletionBreakdown(
        total_deleted=len(deleted),
        unique_deleted=len({(t.author_id, t.text.rstrip()) for t, _ in deleted}),
        repost_clusters=clusters,
        repost_ids=[t.id for t, _ in deleted if t.id in repost_ids],
        typo_deletions=typos,
        deleted_retweet_ids=retweets,
        recommendation_deletions=recommendations,
        unexplained_ids=unexplained,
        unexplained_with_links=with_links,
    )
    logger.info(
        "Deletion breakdown: %d deleted; %s",
        breakdown.total_deleted,
        ", ".join(f"{c.value}={n}" for c, n in breakdown.category_counts().items()),
    )
    return breakdown


def breakdown_frame(breakdown: DeletionBreakdown) -> pd.DataFrame:
    rows = [(c.value, n) for c, n in breakdown.category_counts().items()]
    rows += [
        ("total", breakdown.total_deleted),
        ("unique", breakdown.unique_deleted),
        ("reposted_once", breakdown.reposted_once),
        ("reposted_several", breakdown.reposted_several),
        ("unexplained_with_links", breakdown.unexplained_with_links),
    ]
    return pd.DataFrame(rows, columns=["category", "count"])


def clusters_frame(breakdown: DeletionBreakdown) -> pd.DataFrame:
    return pd.DataFrame(
        [(c.author_id, c.text, c.count) for c in breakdown.repost_clusters],
        columns=["author_id", "text", "count"],
    )


def bin_labels(edges: Sequence[int]) -> list[str]:
    return ["0", *(f"{a}-{b}" for a, b in zip(edges, edges[1:])), "100"]


def fraction_bin(deleted: int, total: int, edges: Sequence[int]) -> str:
    """Bin of the percentage 100*deleted/total, compared in integers."""
    if deleted == 0:
        return "0"
    if deleted == total:
        return "100"
    for a, b in zip(edges, edges[1:]):
        if 100 * deleted <= b * total:
            return f"{a}-{b}"
    raise ValueError(f"deleted count {deleted} exceeds total {total}")


def _user_counts(tweets: Sequence[TweetRecord]) -> dict[str, tuple[int, int]]:
    totals: Counter = Counter()
    dead: Counter = Counter()
    for tweet in tweets:
        totals[tweet.author_id] += 1
        dead[tweet.author_id] += tweet.deleted
    return {a: (dead[a], totals[a]) for a in totals}


def _binned(
    tweets: Sequence[TweetRecord],
    assignments: Mapping[str, UserGroup],
    groups: Sequence[UserGroup],
    edges: Sequence[int],
) -> pd.DataFrame:
    per_user = _user_counts(tweets)
    labels = bin_labels(edges)
    rows = []
    for group in groups:
        counts = Counter(
            fraction_bin(dead, total, edges)
            for author, (dead, total) in per_user.items()
            if assignments.get(author) == group
        )
        rows.extend((group.value, label, counts[label]) for label in labels)
    return pd.DataFrame(rows, columns=["group", "bin", "users"])


def deletion_histogram(
    tweets: Sequence[TweetRecord],
    assignments: Mapping[str, UserGroup],
    groups: Sequence[UserGroup],
) -> pd.DataFrame:
    """Users per deleted-fraction bin (0, 0-10, ..., 90-100, 100) for each group."""
    return _binned(tweets, assignments, groups, HISTOGRAM_EDGES)


def deletion_fraction_profile(
    tweets: Sequence[TweetRecord],
    assignments: Mapping[str, UserGroup],
    groups: Sequence[UserGroup] = (UserGroup.TRADING_COMPANY,),
) -> pd.DataFrame:
    """Finer bins (0, 0-1, 1-5, 5-10, 10-40, 40-100, 100) for the low-deletion range."""
    return _binned(tweets, assignments, groups, PROFILE_EDGES)


def deleted_stance_table(
    tweets: Sequence[TweetRecord],
    assignments: Mapping[str, UserGroup],
    stances: Mapping[str, Stance],
    groups: Sequence[UserGroup],
) -> pd.DataFrame:
    """Deleted tweets per group and stance; percent of all tweets of that stance in the group."""
    totals: Counter = Counter()
    dead: Counter = Counter()
    for tweet in tweets:
        key = (assignments.get(tweet.author_id), stances[tweet.id])
        totals[key] += 1
        dead[key] += tweet.deleted
    rows = []
    for group in groups:
        for stance in STANCE_ORDER:
            n = dead[(group, stance)]
            total = totals[(group, stance)]
            rows.append((group.value, stance.value, n, 100.0 * n / total if total else 0.0))
    return pd.DataFrame(rows, columns=["group", "stance", "count", "percent"])


@dataclass
class RemovalComparison:
    """Event study on all tweets versus tweets that survived the audit."""
    with_deleted: list[EventStudyResult]
    without_deleted: list[EventStudyResult]

    def frame(self) -> pd.DataFrame:
        rows = []
        for full, kept in zip(self.with_deleted, self.without_deleted):
            for stance in STANCE_ORDER:
                a = full.curves[stance].mean_car
                b = kept.curves[stance].mean_car
                for lag in range(max(a.size, b.size)):
                    car_all = float(a[lag]) if lag < a.size else None
                    car_excluded = float(b[lag]) if lag < b.size else None
                    diff = (
                        car_all - car_excluded
                        if car_all is not None and car_excluded is not None
                        else None
                    )
                    rows.append((full.group, stance.value, lag, car_all, car_excluded, diff))
        return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)

    def moved_events(self) -> dict[str, tuple[Stance, Stance]]:
        """Events whose class changed once deleted tweets were dropped, per group."""
        moved = {}
        for full, kept in zip(self.with_deleted, self.without_deleted):
            before = {d.event_id: d.label for d in full.details if not d.skip_reason}
            for detail in kept.details:
                if detail.skip_reason or before.get(detail.event_id) == detail.label:
                    continue
                moved[f"{full.group}:{detail.event_id}"] = (before[detail.event_id], detail.label)
        return moved


def car_removal_comparison(
    events: Sequence[AnnouncementEvent],
    rates: RateSeries,
    tweets: Sequence[ClassifiedTweet],
    groups: Sequence[UserGroup],
    config: EventStudyConfig = EventStudyConfig(),
) -> RemovalComparison:
    """
    Run the per-group event study twice: with and without deleted tweets.

    Rates are shared by both runs, so any difference comes from event typing.
    """
    kept = [t for t in tweets if not t.tweet.deleted]
    logger.info("CAR comparison: %d of %d tweets deleted", len(tweets) - len(kept), len(tweets))
    comparison = RemovalComparison(
        with_deleted=run_group_studies(events, rates, tweets, groups, config),
        without_deleted=run_group_studies(events, rates, kept, groups, config),
    )
    moved = comparison.moved_events()
    if moved:
        logger.info("CAR comparison: %d events changed class", len(moved))
    return comparison
