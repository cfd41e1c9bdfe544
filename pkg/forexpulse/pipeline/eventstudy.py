"""Stage 4: Event Study - Market model, abnormal returns and CAR per event class."""

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Collection, Optional, Sequence

import numpy as np
import pandas as pd

from forexpulse.errors import EventError, EventSkipped, NumericalDegeneracy
from forexpulse.models.schemas import (
    GROUP_ORDER,
    STANCE_ORDER,
    AnnouncementEvent,
    ClassifiedTweet,
    EventClassification,
    EventDetail,
    MarketModel,
    Stance,
    UserGroup,
)
from forexpulse.models.series import RateSeries, epoch_seconds, from_epoch_seconds

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["group", "class", "lag_min", "mean_car", "stderr", "n_events"]
DETAIL_COLUMNS = list(EventDetail.model_fields)


@dataclass(frozen=True)
class EventStudyConfig:
    """Event-study parameters."""
    window_days: int = 30
    horizon: int = 1440
    theta: float = 0.0
    event_window_minutes: int = 60
    lag0_tolerance_seconds: int = 60


@dataclass(frozen=True)
class AbnormalSeries:
    """Abnormal prices and returns of one event, indexed by trading-minute lag."""
    event_id: str
    pab: np.ndarray
    rab: np.ndarray
    horizon: int

    @property
    def lags(self) -> int:
        return int(self.rab.size)


@dataclass(frozen=True)
class CarCurve:
    """Pointwise mean CAR of one event class, with per-lag event counts."""
    group: str
    class_label: Stance
    n_events: int
    mean_car: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    event_ids: tuple[str, ...] = ()


@dataclass
class EventStudyResult:
    group: str
    curves: dict[Stance, CarCurve]
    details: list[EventDetail] = field(default_factory=list)

    @property
    def skipped(self) -> list[EventDetail]:
        return [d for d in self.details if d.skip_reason]


def fit_market_model(
    rates: RateSeries,
    event_time: datetime,
    window: timedelta = timedelta(days=30),
    event_id: str = "",
) -> MarketModel:
    """
    Least-squares line of price against minutes relative to the event.

    Args:
        rates: Minute price series
        event_time: Event instant; the window is [event_time - window, event_time]
        window: Regression window length
        event_id: Used in error messages

    Returns:
        MarketModel with slope k in price units per minute
    """
    t = epoch_seconds(event_time)
    start = t - int(window.total_seconds())
    span = rates.window(start, t)
    prices = rates.prices[span]
    if prices.size < 2:
        raise EventSkipped(event_id, f"{prices.size} rate points in the regression window")

    x = (rates.seconds[span] - t) / 60.0
    dx = x - x.mean()
    slope = float(dx @ (prices - prices.mean())) / float(dx @ dx)
    intercept = float(prices.mean()) - slope * float(x.mean())
    return MarketModel(
        slope=slope,
        intercept=intercept,
        window_start=from_epoch_seconds(start),
        window_end=from_epoch_seconds(t),
        n_points=int(prices.size),
    )


def abnormal_series(
    rates: RateSeries,
    model: MarketModel,
    event_time: datetime,
    horizon: int = 1440,
    event_id: str = "",
    lag0_tolerance_seconds: int = 60,
) -> AbnormalSeries:
    """
    Abnormal prices pab_i = p_i - k*i and returns over traded minutes.

    Lag 0 is the first rate point at or within one minute after the event;
    market-closure gaps are skipped. The series is cut short when the
    data ends before the horizon.
    """
    t = epoch_seconds(event_time)
    first = rates.first_at_or_after(t)
    if first >= len(rates) or rates.seconds[first] - t > lag0_tolerance_seconds:
        raise EventSkipped(event_id, "no rate point within one minute after the event")

    prices = rates.prices[first:first + horizon + 1]
    if prices.size < 2:
        raise EventSkipped(event_id, "no rate points after the event")
    pab = prices - model.slope * np.arange(prices.size)
    if np.any(pab == 0.0):
        raise NumericalDegeneracy(event_id, "abnormal price is zero")
    rab = np.diff(pab) / pab[:-1]
    return AbnormalSeries(event_id=event_id, pab=pab, rab=rab, horizon=horizon)


def car_curve(rab: Sequence[float]) -> np.ndarray:
    """CAR_n = sum of rab_0..rab_n."""
    return np.cumsum(np.asarray(rab, dtype=np.float64))


def label_from_score(score: float, theta: float = 0.0) -> Stance:
    if score > theta:
        return Stance.BUY
    if score < -theta:
        return Stance.SELL
    return Stance.HOLD


def classify_event(
    event: AnnouncementEvent,
    tweets: Sequence[ClassifiedTweet],
    group_filter: Collection[UserGroup],
    theta: float = 0.0,
    window_minutes: int = 60,
) -> EventClassification:
    """
    Type an event by the stances posted in the hour after it.

    Args:
        event: The announcement
        tweets: Stance-classified tweets with author groups
        group_filter: Groups whose tweets count
        theta: Neutral band on n_buy - n_sell
        window_minutes: Window length after the event

    Returns:
        EventClassification; an empty window is Hold
    """
    start = event.timestamp
    end = start + timedelta(minutes=window_minutes)
    counts = {s: 0 for s in STANCE_ORDER}
    for item in tweets:
        if item.group in group_filter and start <= item.tweet.timestamp < end:
            counts[item.stance] += 1
    score = counts[Stance.BUY] - counts[Stance.SELL]
    return EventClassification(
        event_id=event.event_id,
        n_buy=counts[Stance.BUY],
        n_hold=counts[Stance.HOLD],
        n_sell=counts[Stance.SELL],
        label=label_from_score(score, theta),
        window_start=start,
        window_end=end,
    )


def _aggregate(group: str, label: Stance, cars: list[tuple[str, np.ndarray]]) -> CarCurve:
    cars = sorted(cars, key=lambda item: item[0])
    if not cars:
        empty = np.zeros(0)
        return CarCurve(group, label, 0, empty, empty, np.zeros(0, dtype=np.int64))

    length = max(car.size for _, car in cars)
    reference = np.full(length, np.nan)
    sums = np.zeros(length)
    squares = np.zeros(length)
    counts = np.zeros(length, dtype=np.int64)
    for _, car in cars:
        n = car.size
        head = reference[:n]
        unset = np.isnan(head)
        head[unset] = car[unset]
        # shifted sums: identical curves give an exact mean
        delta = car - head
        sums[:n] += delta
        squares[:n] += delta * delta
        counts[:n] += 1

    mean = reference + sums / counts
    stderr = np.zeros(length)
    multi = counts > 1
    variance = (squares[multi] - sums[multi] ** 2 / counts[multi]) / (counts[multi] - 1)
    stderr[multi] = np.sqrt(np.clip(variance, 0.0, None)) / np.sqrt(counts[multi])
    return CarCurve(
        group=group,
        class_label=label,
        n_events=len(cars),
        mean_car=mean,
        stderr=stderr,
        counts=counts,
        event_ids=tuple(event_id for event_id, _ in cars),
    )


def group_label(group_filter: Collection[UserGroup]) -> str:
    return "+".join(g.value for g in GROUP_ORDER if g in group_filter)


def run_event_study(
    events: Sequence[AnnouncementEvent],
    rates: RateSeries,
    tweets: Sequence[ClassifiedTweet],
    group_filter: Collection[UserGroup],
    config: EventStudyConfig = EventStudyConfig(),
    label: Optional[str] = None,
) -> EventStudyResult:
    """
    Classify every event, compute its CAR and average curves per class.

    Args:
        events: Announcements
        rates: Minute price series
        tweets: Stance-classified tweets
        group_filter: Groups whose tweets type the events
        config: Study parameters
        label: Group name written to the outputs

    Returns:
        EventStudyResult with one curve per class and a detail row per event
    """
    label = label or group_label(group_filter)
    group_filter = frozenset(group_filter)
    ordered = sorted(
        (t for t in tweets if t.group in group_filter),
        key=lambda t: t.tweet.timestamp,
    )
    seconds = np.array([epoch_seconds(t.tweet.timestamp) for t in ordered], dtype=np.int64)
    window = timedelta(days=config.window_days)

    cars: dict[Stance, list[tuple[str, np.ndarray]]] = {s: [] for s in STANCE_ORDER}
    details: list[EventDetail] = []
    for event in events:
        t = epoch_seconds(event.timestamp)
        lo = int(np.searchsorted(seconds, t, side="left"))
        hi = int(np.searchsorted(seconds, t + 60 * config.event_window_minutes, side="left"))
        typed = classify_event(
            event, ordered[lo:hi], group_filter, config.theta, config.event_window_minutes
        )
        row = dict(
            group=label,
            event_id=event.event_id,
            timestamp=event.timestamp,
            source=event.source,
            n_buy=typed.n_buy,
            n_hold=typed.n_hold,
            n_sell=typed.n_sell,
            score=typed.score,
            label=typed.label,
        )
        try:
            model = fit_market_model(rates, event.timestamp, window, event.event_id)
            row.update(k=model.slope, n_points=model.n_points)
            series = abnormal_series(
                rates, model, event.timestamp, config.horizon, event.event_id,
                config.lag0_tolerance_seconds,
            )
        except EventError as e:
            logger.warning("Event %s excluded (%s): %s", e.event_id, e.reason, e.detail)
            details.append(EventDetail(**row, skip_reason=f"{e.reason}: {e.detail}"))
            continue
        cars[typed.label].append((event.event_id, car_curve(series.rab)))
        details.append(EventDetail(**row, lags=series.lags))
        logger.debug("Event %s typed %s with %d lags", event.event_id, typed.label.value, series.lags)

    curves = {s: _aggregate(label, s, cars[s]) for s in STANCE_ORDER}
    logger.info(
        "Event study [%s]: %s; %d skipped",
        label,
        ", ".join(f"{s.value}={curves[s].n_events}" for s in STANCE_ORDER),
        sum(1 for d in details if d.skip_reason),
    )
    return EventStudyResult(group=label, curves=curves, details=details)


def run_group_studies(
    events: Sequence[AnnouncementEvent],
    rates: RateSeries,
    tweets: Sequence[ClassifiedTweet],
    groups: Sequence[UserGroup],
    config: EventStudyConfig = EventStudyConfig(),
) -> list[EventStudyResult]:
    """One study per requested group, in the requested order."""
    return [
        run_event_study(events, rates, tweets, {group}, config, label=group.value)
        for group in groups
    ]


def curves_frame(results: Sequence[EventStudyResult]) -> pd.DataFrame:
    records = []
    for result in results:
        for stance in STANCE_ORDER:
            curve = result.curves[stance]
            for lag in range(curve.mean_car.size):
                records.append({
                    "group": result.group,
                    "class": stance.value,
                    "lag_min": lag,
                    "mean_car": float(curve.mean_car[lag]),
                    "stderr": float(curve.stderr[lag]),
                    "n_events": int(curve.counts[lag]),
                })
    return pd.DataFrame.from_records(records, columns=CURVE_COLUMNS)


def details_frame(results: Sequence[EventStudyResult]) -> pd.DataFrame:
    records = [d.model_dump(mode="json") for r in results for d in r.details]
    frame = pd.DataFrame.from_records(records, columns=DETAIL_COLUMNS)
    for column in ("n_points", "lags"):
        frame[column] = frame[column].astype("Int64")
    return frame
