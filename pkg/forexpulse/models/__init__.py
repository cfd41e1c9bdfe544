"""Pydantic models and series types for the analytics pipeline."""

from forexpulse.models.schemas import (
    Stance,
    UserGroup,
    EventSource,
    TweetRecord,
    ParseError,
    AnnouncementEvent,
    DeletionAuditEntry,
    GroupRuleConfig,
    UserProfile,
    ClassifiedTweet,
    GroupReport,
    EvalReport,
    MarketModel,
    EventClassification,
    EventDetail,
    TypoRuleConfig,
    RecommendationLexicon,
    RepostCluster,
    DeletionBreakdown,
    SyntheticSpec,
    GroundTruth,
)
from forexpulse.models.series import RateSeries

__all__ = [
    "Stance",
    "UserGroup",
    "EventSource",
    "TweetRecord",
    "ParseError",
    "AnnouncementEvent",
    "DeletionAuditEntry",
    "GroupRuleConfig",
    "UserProfile",
    "ClassifiedTweet",
    "GroupReport",
    "EvalReport",
    "MarketModel",
    "EventClassification",
    "EventDetail",
    "TypoRuleConfig",
    "RecommendationLexicon",
    "RepostCluster",
    "DeletionBreakdown",
    "SyntheticSpec",
    "GroundTruth",
    "RateSeries",
]
