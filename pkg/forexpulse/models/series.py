"""Minute-resolution price series backed by numpy arrays."""

from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable

import numpy as np

from forexpulse.errors import RateSeriesError
from forexpulse.models.schemas import to_utc_second


def epoch_seconds(value: datetime) -> int:
    return int(to_utc_second(value).timestamp())


def from_epoch_seconds(value: int) -> datetime:
    return datetime.fromtimestamp(int(value), tz=timezone.utc)


@dataclass(frozen=True)
class RateSeries:
    """
    Time-ordered prices of one currency pair.

    Timestamps are UTC epoch seconds on minute boundaries, strictly
    increasing. Market-closure gaps are kept as they are.
    """
    pair: str
    seconds: np.ndarray
    prices: np.ndarray

    def __post_init__(self) -> None:
        seconds = np.asarray(self.seconds, dtype=np.int64)
        prices = np.asarray(self.prices, dtype=np.float64)
        if seconds.ndim != 1 or seconds.shape != prices.shape:
            raise RateSeriesError("timestamps and prices must be 1-D and of equal length")
        if seconds.size and np.any(seconds % 60 != 0):
            raise RateSeriesError("timestamps must lie on minute boundaries")
        if seconds.size > 1 and np.any(np.diff(seconds) <= 0):
            raise RateSeriesError("timestamps must be strictly increasing")
        if prices.size and not np.all(np.isfinite(prices) & (prices > 0)):
            raise RateSeriesError("prices must be finite and positive")
        seconds.flags.writeable = False
        prices.flags.writeable = False
        object.__setattr__(self, "seconds", seconds)
        object.__setattr__(self, "prices", prices)

    @classmethod
    def from_points(cls, pair: str, points: Iterable[tuple[datetime, float]]) -> "RateSeries":
        points = list(points)
        return cls(
            pair=pair,
            seconds=np.array([epoch_seconds(t) for t, _ in points], dtype=np.int64),
            prices=np.array([p for _, p in points], dtype=np.float64),
        )

    def __len__(self) -> int:
        return int(self.seconds.size)

    def first_at_or_after(self, second: int) -> int:
        """Index of the first point not earlier than ``second`` (len if none)."""
        return int(np.searchsorted(self.seconds, second, side="left"))

    def window(self, start: int, end: int) -> slice:
        """Slice of points with start <= t <= end."""
        lo = int(np.searchsorted(self.seconds, start, side="left"))
        hi = int(np.searchsorted(self.seconds, end, side="right"))
        return slice(lo, hi)
