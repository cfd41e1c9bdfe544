"""Tests for the market model, abnormal returns and CAR aggregation."""

from datetime import timedelta

import numpy as np
import pytest

from forexpulse.errors import EventSkipped, NumericalDegeneracy
from forexpulse.models.schemas import (
    AnnouncementEvent,
    ClassifiedTweet,
    EventSource,
    MarketModel,
    Stance,
    SyntheticSpec,
    UserGroup,
)
from forexpulse.models.series import RateSeries, epoch_seconds
from forexpulse.pipeline.eventstudy import (
    DETAIL_COLUMNS,
    EventStudyConfig,
    _aggregate,
    abnormal_series,
    car_curve,
    classify_event,
    curves_frame,
    details_frame,
    fit_market_model,
    label_from_score,
    run_event_study,
    run_group_studies,
)
from forexpulse.services.synthetic import generate_synthetic
from tests.conftest import utc

EVENT_TIME = utc("2014-05-08T11:45:00Z")
TRADERS = {UserGroup.TRADING_COMPANY, UserGroup.INDIVIDUAL_TRADER}


def _series(minutes, prices) -> RateSeries:
    t = epoch_seconds(EVENT_TIME)
    return RateSeries(pair="EURUSD", seconds=t + 60 * np.asarray(minutes, dtype=np.int64), prices=prices)


def _flat_model(slope: float = 0.0) -> MarketModel:
    return MarketModel(
        slope=slope, intercept=1.0, window_start=EVENT_TIME - timedelta(days=30),
        window_end=EVENT_TIME, n_points=2,
    )


class TestMarketModel:
    def test_linear_path_has_zero_car(self):
        rng = np.random.default_rng(1)
        minutes = np.arange(-3 * 1440, 241)
        for _ in range(20):
            intercept = rng.uniform(0.8, 1.6)
            slope = rng.uniform(-1e-6, 1e-6)
            rates = _series(minutes, intercept + slope * minutes)
            model = fit_market_model(rates, EVENT_TIME, timedelta(days=3))
            assert model.slope == pytest.approx(slope, rel=1e-6, abs=1e-15)
            series = abnormal_series(rates, model, EVENT_TIME, horizon=240)
            assert np.max(np.abs(car_curve(series.rab))) < 1e-10

    def test_slope_matches_least_squares(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(3, 400))
            minutes = np.sort(rng.choice(np.arange(-1440, 1), size=n, replace=False))
            prices = 1.3 + np.cumsum(rng.normal(0, 1e-4, size=n))
            rates = _series(minutes, prices)
            model = fit_market_model(rates, EVENT_TIME, timedelta(days=1))
            slope, intercept = np.polyfit(minutes.astype(float), prices, 1)
            assert model.slope == pytest.approx(slope, rel=1e-7, abs=1e-13)
            assert model.intercept == pytest.approx(intercept, rel=1e-9)
            assert model.n_points == n

    def test_window_excludes_older_points(self):
        rates = _series([-100, -2, -1, 0], [5.0, 1.0, 1.1, 1.2])
        model = fit_market_model(rates, EVENT_TIME, timedelta(minutes=2))
        assert model.n_points == 3
        assert model.slope == pytest.approx(0.1)

    def test_too_few_points(self):
        rates = _series([0, 1, 2], [1.0, 1.0, 1.0])
        with pytest.raises(EventSkipped, match="1 rate points"):
            fit_market_model(rates, EVENT_TIME, timedelta(days=1), event_id="E1")


class TestAbnormalReturns:
    def test_returns_from_prices(self):
        series = abnormal_series(_series([0, 1, 2], [1.0, 1.1, 1.2]), _flat_model(), EVENT_TIME)
        np.testing.assert_allclose(series.rab, [0.1, 0.1 / 1.1])
        np.testing.assert_allclose(car_curve(series.rab), [0.1, 0.1 + 0.1 / 1.1])

    def test_slope_is_removed_per_lag(self):
        series = abnormal_series(_series([0, 1, 2], [1.0, 1.1, 1.2]), _flat_model(0.1), EVENT_TIME)
        np.testing.assert_allclose(series.pab, [1.0, 1.0, 1.0])
        np.testing.assert_allclose(series.rab, [0.0, 0.0])

    def test_gaps_count_trading_minutes(self):
        series = abnormal_series(_series([0, 1, 61, 2000], [1.0, 1.0, 2.0, 4.0]), _flat_model(), EVENT_TIME)
        np.testing.assert_allclose(series.rab, [0.0, 1.0, 1.0])

    def test_truncated_at_data_end(self):
        series = abnormal_series(_series([0, 1, 2, 3], [1.0, 1.0, 1.0, 1.0]), _flat_model(), EVENT_TIME, horizon=10)
        assert series.lags == 3
        assert series.horizon == 10

    def test_horizon_caps_lags(self):
        series = abnormal_series(_series(range(20), np.ones(20)), _flat_model(), EVENT_TIME, horizon=5)
        assert series.lags == 5

    def test_lag0_within_one_minute(self):
        series = abnormal_series(_series([1, 2], [1.0, 1.1]), _flat_model(), EVENT_TIME)
        assert series.lags == 1
        np.testing.assert_allclose(series.rab, [0.1])

    def test_missing_lag0(self):
        with pytest.raises(EventSkipped, match="within one minute"):
            abnormal_series(_series([2, 3], [1.0, 1.0]), _flat_model(), EVENT_TIME, event_id="E9")

    def test_no_points_after_lag0(self):
        with pytest.raises(EventSkipped, match="after the event"):
            abnormal_series(_series([-1, 0], [1.0, 1.0]), _flat_model(), EVENT_TIME)

    def test_zero_abnormal_price(self):
        with pytest.raises(NumericalDegeneracy):
            abnormal_series(_series([0, 1], [1.0, 0.5]), _flat_model(0.5), EVENT_TIME)


class TestEventTyping:
    @pytest.fixture
    def event(self):
        return AnnouncementEvent(event_id="E1", timestamp=EVENT_TIME, source=EventSource.ECB)

    def _tweet(self, make_tweet, id, minutes, stance, group=UserGroup.TRADING_COMPANY):
        ts = (EVENT_TIME + timedelta(minutes=minutes)).strftime("%Y-%m-%dT%H:%M:%SZ")
        return ClassifiedTweet(tweet=make_tweet(id, ts=ts), stance=stance, group=group)

    def test_counts_in_window(self, event, make_tweet):
        tweets = [
            self._tweet(make_tweet, "1", 0, Stance.BUY),
            self._tweet(make_tweet, "2", 59, Stance.BUY),
            self._tweet(make_tweet, "3", 60, Stance.SELL),
            self._tweet(make_tweet, "4", -1, Stance.SELL),
            self._tweet(make_tweet, "5", 10, Stance.HOLD, UserGroup.INDIVIDUAL_TRADER),
            self._tweet(make_tweet, "6", 10, Stance.SELL, UserGroup.TRADING_ROBOT),
        ]
        typed = classify_event(event, tweets, TRADERS)
        assert (typed.n_buy, typed.n_hold, typed.n_sell) == (2, 1, 0)
        assert typed.score == 2
        assert typed.label == Stance.BUY

    def test_empty_window_is_hold(self, event):
        assert classify_event(event, [], TRADERS).label == Stance.HOLD

    @pytest.mark.parametrize(
        "score, theta, expected",
        [(1, 0, Stance.BUY), (-1, 0, Stance.SELL), (0, 0, Stance.HOLD),
         (2, 2, Stance.HOLD), (-2, 2, Stance.HOLD), (3, 2, Stance.BUY), (-3, 2, Stance.SELL)],
    )
    def test_neutral_band(self, score, theta, expected):
        assert label_from_score(score, theta) == expected


class TestAggregation:
    def test_identical_curves_have_exact_mean(self):
        car = np.cumsum(np.full(50, 0.1 / 3))
        curve = _aggregate("g", Stance.BUY, [("b", car.copy()), ("a", car.copy()), ("c", car.copy())])
        assert curve.mean_car.tobytes() == car.tobytes()
        assert np.all(curve.stderr == 0.0)
        assert curve.event_ids == ("a", "b", "c")

    def test_ragged_curves(self):
        curve = _aggregate("g", Stance.SELL, [("a", np.array([1.0, 2.0, 3.0])), ("b", np.array([3.0]))])
        np.testing.assert_allclose(curve.mean_car, [2.0, 2.0, 3.0])
        np.testing.assert_array_equal(curve.counts, [2, 1, 1])
        np.testing.assert_allclose(curve.stderr, [1.0, 0.0, 0.0])

    def test_empty_class(self):
        curve = _aggregate("g", Stance.HOLD, [])
        assert curve.n_events == 0
        assert curve.mean_car.size == 0


class TestStudy:
    def test_small_corpus_recovers_planted_curves(self, small_corpus):
        config = EventStudyConfig(horizon=small_corpus.spec.horizon)
        result = run_event_study(
            small_corpus.events, small_corpus.rates, small_corpus.classified(), TRADERS, config
        )
        assert result.group == "company+individual"
        assert result.skipped == []
        assert {d.event_id: d.label for d in result.details} == small_corpus.ground_truth.event_labels
        for stance, planted in small_corpus.ground_truth.planted_car.items():
            curve = result.curves[stance]
            assert curve.n_events == 2
            assert curve.mean_car.size == config.horizon
            assert curve.mean_car[-1] == pytest.approx(planted, abs=1e-9)

    def test_skipped_events_are_reported(self, small_corpus):
        late = AnnouncementEvent(
            event_id="LATE", timestamp=utc("2030-01-01T00:00:00Z"), source=EventSource.GOV
        )
        result = run_event_study(
            [*small_corpus.events, late], small_corpus.rates, small_corpus.classified(), TRADERS
        )
        assert [d.event_id for d in result.skipped] == ["LATE"]
        assert result.skipped[0].skip_reason.startswith("skipped: ")
        frame = details_frame([result])
        assert list(frame.columns) == DETAIL_COLUMNS
        assert frame["lags"].isna().sum() == 1

    def test_curves_frame_per_group(self, small_corpus):
        config = EventStudyConfig(horizon=small_corpus.spec.horizon)
        results = run_group_studies(
            small_corpus.events, small_corpus.rates, small_corpus.classified(),
            [UserGroup.TRADING_COMPANY, UserGroup.INDIVIDUAL_TRADER], config,
        )
        frame = curves_frame(results)
        assert list(frame["group"].unique()) == ["company", "individual"]
        assert frame["lag_min"].max() == config.horizon - 1

    def test_noisy_corpus_recovers_drift_within_error(self):
        spec = SyntheticSpec(
            seed=99, robots=0, spammers=0, companies=1, individuals=2, others=0,
            events=150, history_minutes=240, horizon=240,
            noise_sigma=0.0002, drift=0.001,
            repost_clusters=0, typos=0, deleted_retweets=0, recommendations=0, other_deletions=0,
        )
        corpus = generate_synthetic(spec)
        result = run_event_study(
            corpus.events, corpus.rates, corpus.classified(), TRADERS, EventStudyConfig(horizon=240)
        )
        for stance, planted in corpus.ground_truth.planted_car.items():
            curve = result.curves[stance]
            assert curve.n_events == 50
            recovered, error = curve.mean_car[-1], curve.stderr[-1]
            assert abs(recovered - planted) < 3 * error
            if stance != Stance.HOLD:
                assert np.sign(recovered) == np.sign(planted)
