"""Pipeline Orchestrator - Wires the stages behind each subcommand."""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import pandas as pd

from forexpulse.config import PipelineConfig, get_settings
from forexpulse.errors import ConfigError, DataError, ForexPulseError
from forexpulse.models.schemas import (
    ClassifiedTweet,
    DeletionAuditEntry,
    GroupRuleConfig,
    ParseError,
    Stance,
    TweetRecord,
    UserGroup,
    UserProfile,
    format_timestamp,
)
from forexpulse.models.series import RateSeries
from forexpulse.pipeline import eventstudy, manipulation, stance, usergroups
from forexpulse.pipeline.ingest import (
    apply_deletion_audit,
    deleted_fraction,
    load_audit,
    load_events,
    load_rates,
    load_tweets,
)
from forexpulse.services.report_writer import write_csv, write_json
from forexpulse.services.synthetic import generate_synthetic, write_synthetic

logger = logging.getLogger(__name__)

SUBCOMMANDS = (
    "ingest", "train", "eval", "classify", "groups",
    "event-study", "deletions", "report", "synth",
)


@dataclass
class _Ingested:
    tweets: list[TweetRecord]
    parse_errors: list[ParseError]
    audit: list[DeletionAuditEntry]
    audit_errors: list[ParseError]
    unmatched_audit_ids: list[str]


@dataclass
class PipelineRun:
    """Outcome of one subcommand."""
    command: str
    exit_code: int
    outputs: list[Path] = field(default_factory=list)
    error: Optional[str] = None


class PipelineOrchestrator:
    """
    Runs the analysis stages for one configuration.

    Pipeline stages:
    1. Ingest - Parse archives and apply the deletion audit
    2. Stance - Train, evaluate and apply the two-plane classifier
    3. User Groups - Profile accounts and assign groups
    4. Event Study - Type events and average CAR per class
    5. Manipulation - Deletion forensics and the deletion-aware study

    Inputs are loaded once and shared by every stage of a run.
    """

    def __init__(self, config: Optional[PipelineConfig] = None):
        self.config = config or get_settings()

    @property
    def out(self) -> Path:
        return Path(self.config.out)

    def handlers(self) -> dict[str, Callable[[], list[Path]]]:
        return {
            "ingest": self.ingest,
            "train": self.train,
            "eval": self.evaluate,
            "classify": self.classify,
            "groups": self.groups,
            "event-study": self.event_study,
            "deletions": self.deletions,
            "report": self.report,
            "synth": self.synth,
        }

    # Shared inputs
    @cached_property
    def _ingested(self) -> _Ingested:
        config = self.config
        config.require_inputs("tweets")
        tweets, parse_errors = load_tweets(config.tweets)
        if config.audit is not None:
            config.require_inputs("audit")
        audit, audit_errors = load_audit(config.audit)
        tweets, unmatched = apply_deletion_audit(tweets, audit, config.audit_latest_wins)
        return _Ingested(tweets, parse_errors, audit, audit_errors, unmatched)

    @property
    def tweets(self) -> list[TweetRecord]:
        return self._ingested.tweets

    @cached_property
    def rates(self) -> RateSeries:
        self.config.require_inputs("rates")
        return load_rates(self.config.rates)

    @cached_property
    def events(self):
        self.config.require_inputs("events")
        return load_events(self.config.events)

    @cached_property
    def group_rules(self) -> GroupRuleConfig:
        return usergroups.load_group_rules(self.config.group_rules)

    @cached_property
    def profiles(self) -> list[UserProfile]:
        return usergroups.build_profiles(self.tweets, self.group_rules)

    @cached_property
    def assignments(self) -> dict[str, UserGroup]:
        return usergroups.assign_groups(self.profiles, self.group_rules)

    @cached_property
    def labeled(self) -> list[tuple[TweetRecord, Stance]]:
        """Gold-labeled tweets in time order."""
        labeled = [(t, t.gold_label) for t in self.tweets if t.gold_label is not None]
        labeled.sort(key=lambda item: item[0].timestamp)
        return labeled

    @property
    def training_params(self) -> stance.TrainingParams:
        return stance.TrainingParams(
            lambda_reg=self.config.lambda_reg, epochs=self.config.epochs, seed=self.config.seed
        )

    def _train_model(self) -> stance.TwoPlaneModel:
        if not self.labeled:
            raise DataError("no gold-labeled tweets to train on", module="stance")
        vectors = stance.featurize_many((t.text for t, _ in self.labeled), self.config.dim)
        data = [(v, label) for v, (_, label) in zip(vectors, self.labeled)]
        return stance.train_two_plane(data, self.training_params)

    @cached_property
    def model(self) -> stance.TwoPlaneModel:
        path = self.config.model_path
        if path.is_file():
            logger.info("Loading stance model from %s", path)
            return stance.load_model(path)
        logger.info("No model at %s; training from gold labels", path)
        return self._train_model()

    @cached_property
    def stances(self) -> dict[str, Stance]:
        return stance.classify_corpus(self.model, self.tweets)

    @cached_property
    def classified(self) -> list[ClassifiedTweet]:
        return [
            ClassifiedTweet(tweet=t, stance=self.stances[t.id], group=self.assignments[t.author_id])
            for t in self.tweets
        ]

    @property
    def study_config(self) -> eventstudy.EventStudyConfig:
        c = self.config
        return eventstudy.EventStudyConfig(
            window_days=c.window_days,
            horizon=c.horizon,
            theta=c.theta,
            event_window_minutes=c.event_window_minutes,
        )

    # Subcommands
    def ingest(self) -> list[Path]:
        """Validate the archives and summarize them."""
        ingested = self._ingested
        summary = {
            "tweets": len(ingested.tweets),
            "parse_errors": ingested.parse_errors,
            "labeled": len(self.labeled),
            "audit": {
                "entries": len(ingested.audit),
                "parse_errors": ingested.audit_errors,
                "unmatched_ids": ingested.unmatched_audit_ids,
                "deleted": sum(1 for t in ingested.tweets if t.deleted),
                "deleted_fraction": deleted_fraction(ingested.tweets),
            },
        }
        if self.config.rates is not None:
            rates = self.rates
            summary["rates"] = {"points": len(rates), "pair": rates.pair}
        if self.config.events is not None:
            summary["events"] = len(self.events)
        return [write_json(self.out / "ingest_summary.json", summary)]

    def train(self) -> list[Path]:
        model = self._train_model()
        path = self.config.model_path
        stance.save_model(model, path)
        return [path]

    def evaluate(self) -> list[Path]:
        vectors = stance.featurize_many((t.text for t, _ in self.labeled), self.config.dim)
        data = [(t, v, label) for v, (t, label) in zip(vectors, self.labeled)]
        report = stance.blocked_cv(data, self.config.folds, self.training_params, self.config.cv_gap)
        return [write_json(self.out / "eval_report.json", report)]

    def classify(self) -> list[Path]:
        frame = pd.DataFrame(
            [
                (t.id, t.author_id, format_timestamp(t.timestamp), self.stances[t.id].value)
                for t in self.tweets
            ],
            columns=["tweet_id", "author_id", "timestamp", "stance"],
        )
        return [write_csv(self.out / "tweet_stances.csv", frame)]

    def groups(self) -> list[Path]:
        report = usergroups.group_report(self.profiles, self.tweets, self.stances, self.group_rules)
        return [
            write_csv(self.out / "user_groups.csv", usergroups.profiles_frame(self.profiles, self.assignments)),
            write_csv(self.out / "group_report.csv", usergroups.report_frame(report)),
        ]

    def event_study(self) -> list[Path]:
        results = eventstudy.run_group_studies(
            self.events, self.rates, self.classified, self.config.groups, self.study_config
        )
        return [
            write_csv(self.out / "car_curves.csv", eventstudy.curves_frame(results)),
            write_csv(self.out / "events_detail.csv", eventstudy.details_frame(results)),
        ]

    def deletions(self) -> list[Path]:
        config = self.config
        groups = config.groups
        breakdown = manipulation.deletion_breakdown(self.tweets, config.typo, config.lexicon)
        comparison = manipulation.car_removal_comparison(
            self.events, self.rates, self.classified, groups, self.study_config
        )
        outputs = [
            write_csv(
                self.out / "deletion_histogram.csv",
                manipulation.deletion_histogram(self.tweets, self.assignments, groups),
            ),
            write_csv(
                self.out / "deletion_profile.csv",
                manipulation.deletion_fraction_profile(self.tweets, self.assignments),
            ),
            write_csv(self.out / "deletion_breakdown.csv", manipulation.breakdown_frame(breakdown)),
            write_csv(
                self.out / "deleted_stance.csv",
                manipulation.deleted_stance_table(self.tweets, self.assignments, self.stances, groups),
            ),
            write_csv(self.out / "repost_clusters.csv", manipulation.clusters_frame(breakdown)),
            write_csv(self.out / "car_comparison.csv", comparison.frame()),
        ]
        if config.author is not None:
            if config.author not in self.assignments:
                raise ConfigError(f"author {config.author} has no tweets", module="manipulation")
            single = manipulation.deletion_breakdown(
                self.tweets, config.typo, config.lexicon, author=config.author
            )
            outputs.append(
                write_csv(self.out / "author_breakdown.csv", manipulation.breakdown_frame(single))
            )
        return outputs

    def report(self) -> list[Path]:
        return self.groups() + self.event_study() + self.deletions()

    def synth(self) -> list[Path]:
        corpus = generate_synthetic(
            self.config.synth,
            window_days=self.config.window_days,
            rules=self.group_rules,
            lexicon=self.config.lexicon,
            typo_config=self.config.typo,
        )
        return write_synthetic(corpus, self.out)


def run_pipeline(config: PipelineConfig, command: str) -> PipelineRun:
    """
    Run one subcommand and map failures onto exit codes.

    Args:
        config: Effective configuration
        command: One of SUBCOMMANDS

    Returns:
        PipelineRun with exit code 0, 1 (configuration) or 2 (data)
    """
    orchestrator = PipelineOrchestrator(config)
    try:
        handler = orchestrator.handlers().get(command)
        if handler is None:
            raise ConfigError(f"unknown subcommand {command!r}", module="cli")
        outputs = handler()
    except ForexPulseError as e:
        logger.error("%s failed: %s", command, e)
        return PipelineRun(command=command, exit_code=e.exit_code, error=str(e))
    for path in outputs:
        logger.info("Wrote %s", path)
    return PipelineRun(command=command, exit_code=0, outputs=outputs)

