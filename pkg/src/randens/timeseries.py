"""Core containers for hourly (or any fixed-step) series split into daily cycles."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DuplicateTimestamp, MisalignedCycles, NonFinite

ONE_DAY = np.timedelta64(1, "D")


def to_datetime64(values) -> np.ndarray:
    return np.asarray(values, dtype="datetime64[s]")


def as_date(value) -> dt.date:
    """Coerce a date, datetime, numpy datetime64 or ISO string into a ``date``."""
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]").item()
    return dt.date.fromisoformat(str(value))


@dataclass(frozen=True)
class SeasonalSequence:
    """One cycle of the series (a day of hourly values for load data)."""

    values: np.ndarray
    index: int = 0
    start_timestamp: dt.datetime | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("a seasonal sequence needs at least 2 values")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def date(self) -> dt.date | None:
        return None if self.start_timestamp is None else self.start_timestamp.date()

    @property
    def weekday(self) -> int | None:
        return None if self.start_timestamp is None else self.start_timestamp.weekday()


@dataclass(frozen=True)
class TimeSeries:
    """Timestamped scalar series with a cycle length of ``n`` samples per day.

    Timestamps are naive wall-clock values on a fixed-offset clock. Whole days
    may be absent (for example atypical days listed in ``excluded``), but inside
    a day every one of the ``n`` slots must be present.
    """

    timestamps: np.ndarray
    values: np.ndarray
    n: int = 24
    excluded: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        ts = to_datetime64(self.timestamps)
        values = np.asarray(self.values, dtype=float)
        if ts.shape != values.shape or values.ndim != 1:
            raise ValueError("timestamps and values must be 1-d arrays of equal length")
        if not np.all(np.isfinite(values)):
            raise NonFinite("series contains NaN or infinite values")
        if ts.size > 1:
            steps = np.diff(ts)
            if np.any(steps <= np.timedelta64(0, "s")):
                bad = int(np.argmax(steps <= np.timedelta64(0, "s"))) + 1
                raise DuplicateTimestamp(f"timestamps not strictly increasing at {ts[bad]}")
        if self.n < 2:
            raise ValueError("cycle length must be at least 2")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "excluded", frozenset(as_date(d) for d in self.excluded))

    def __len__(self):
        return self.values.size

    @property
    def K(self) -> int:
        return self.values.size

    @property
    def step(self) -> np.timedelta64:
        return np.timedelta64(86400 // self.n, "s")

    @cached_property
    def _cycle_table(self):
        """Validate whole-day alignment; return (dates, values matrix, date->row map)."""
        K, n = self.K, self.n
        if K % n:
            raise MisalignedCycles(f"series length {K} is not a multiple of the cycle length {n}")
        if 86400 % n:
            raise MisalignedCycles(f"cycle length {n} does not divide a day into whole seconds")
        ts = self.timestamps.reshape(-1, n)
        days = ts[:, 0].astype("datetime64[D]")
        if np.any(ts[:, 0] != days.astype("datetime64[s]")):
            raise MisalignedCycles("every cycle must start at midnight")
        expected = ts[:, :1] + np.arange(n) * self.step
        if np.any(ts != expected):
            raise MisalignedCycles("cycle slots are not evenly spaced within a day")
        dates = [d.item() for d in days]
        return dates, self.values.reshape(-1, n), {d: i for i, d in enumerate(dates)}

    @property
    def dates(self) -> list[dt.date]:
        return list(self._cycle_table[0])

    @property
    def cycles(self) -> np.ndarray:
        """Values as a (K/n, n) matrix, one row per day."""
        return self._cycle_table[1]

    def row_of(self, day) -> int | None:
        return self._cycle_table[2].get(as_date(day))

    def has_day(self, day) -> bool:
        return self.row_of(day) is not None

    def day_values(self, day) -> np.ndarray:
        row = self.row_of(day)
        if row is None:
            raise KeyError(as_date(day))
        return self.cycles[row]

    def sequence(self, day) -> SeasonalSequence:
        row = self.row_of(day)
        if row is None:
            raise KeyError(as_date(day))
        start = self.timestamps[row * self.n].item()
        return SeasonalSequence(self.cycles[row].copy(), row + 1, start)

    def window(self, start=None, end=None) -> TimeSeries:
        """Whole days with ``start <= date <= end``."""
        dates = np.array(self.dates, dtype="datetime64[D]")
        keep = np.ones(dates.size, dtype=bool)
        if start is not None:
            keep &= dates >= np.datetime64(as_date(start))
        if end is not None:
            keep &= dates <= np.datetime64(as_date(end))
        rows = np.repeat(keep, self.n)
        return TimeSeries(self.timestamps[rows], self.values[rows], self.n, self.excluded)


def split_cycles(series: TimeSeries) -> list[SeasonalSequence]:
    """Split a series into its daily cycles, in temporal order, indexed from 1."""
    dates, matrix, _ = series._cycle_table
    starts = series.timestamps[:: series.n]
    return [
        SeasonalSequence(matrix[i].copy(), i + 1, starts[i].item())
        for i in range(len(dates))
    ]
