"""Series ingestion, synthetic series, the naive baseline and rolling daily forecasts."""

from __future__ import annotations

import csv
import datetime as dt
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol
from zoneinfo import ZoneInfo

import numpy as np

from .ensemble import DEFAULT_M, DiversityStrategy, member_forecasts, train_ensemble, _shifted_mean
from .errors import (
    DuplicateTimestamp,
    EmptyTrainingSet,
    GapError,
    InvalidParameter,
    MissingHistory,
    ParseError,
    ZeroDispersion,
)
from .patterns import build_training_set, encode_input
from .randnn import RandNNConfig
from .timeseries import SeasonalSequence, TimeSeries, as_date, split_cycles

__all__ = [
    "CsvSchema",
    "DEFAULT_DAILY_SHAPE",
    "DEFAULT_WEEKDAY_AMPLITUDES",
    "DayForecast",
    "EnsembleForecaster",
    "NaiveForecaster",
    "RollingForecastResult",
    "SeasonalSequence",
    "TimeSeries",
    "day_seed",
    "load_csv",
    "naive_forecast",
    "read_exclusions",
    "rolling_forecast",
    "split_cycles",
    "synth_series",
    "write_csv",
]

# Monday..Sunday; weekend demand drops.
DEFAULT_WEEKDAY_AMPLITUDES = (1.0, 1.02, 1.02, 1.01, 0.98, 0.86, 0.80)

# Relative hourly load, 00:00..23:00: night trough, morning ramp, evening peak.
DEFAULT_DAILY_SHAPE = (
    0.78, 0.74, 0.72, 0.71, 0.72, 0.76, 0.86, 0.98, 1.06, 1.09, 1.10, 1.10,
    1.09, 1.08, 1.07, 1.06, 1.07, 1.12, 1.18, 1.19, 1.14, 1.05, 0.94, 0.85,
)


@dataclass(frozen=True)
class CsvSchema:
    timestamp_column: str = "timestamp"
    value_column: str = "value"
    # None keeps naive timestamps as they are and converts aware ones to UTC.
    timezone: str | None = None


def _tzinfo(name: str | None):
    if name is None or name.upper() in ("UTC", "Z"):
        return dt.timezone.utc
    if name[0] in "+-":
        sign = 1 if name[0] == "+" else -1
        hours, _, minutes = name[1:].partition(":")
        return dt.timezone(sign * dt.timedelta(hours=int(hours), minutes=int(minutes or 0)))
    return ZoneInfo(name)


def _parse_timestamp(text: str, tz) -> dt.datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    stamp = dt.datetime.fromisoformat(text)
    if stamp.tzinfo is not None:
        stamp = stamp.astimezone(tz).replace(tzinfo=None)
    return stamp


def read_exclusions(path) -> frozenset[dt.date]:
    """Read a list of ISO dates, one per line; blank lines and ``#`` comments are ignored."""
    dates = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            dates.add(dt.date.fromisoformat(line))
        except ValueError:
            raise ParseError(f"not an ISO date: {line!r}", lineno) from None
    return frozenset(dates)


def load_csv(path, schema: CsvSchema | None = None, excluded=(), n: int = 24) -> TimeSeries:
    """Load a ``timestamp,value`` CSV into a gap-checked :class:`TimeSeries`.

    Rows falling on ``excluded`` dates are removed as whole days. Every other
    day between the first and last one must have all ``n`` slots, otherwise a
    :class:`GapError` lists the missing timestamps. Series must be on a clock
    without DST shifts (UTC or a fixed offset).
    """
    schema = schema or CsvSchema()
    tz = _tzinfo(schema.timezone)
    excluded = frozenset(as_date(d) for d in excluded)
    stamps, values = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {schema.timestamp_column, schema.value_column} - set(reader.fieldnames or ())
        if missing:
            raise ParseError(f"missing column(s): {', '.join(sorted(missing))}", 1)
        for row in reader:
            line = reader.line_num
            try:
                stamp = _parse_timestamp(row[schema.timestamp_column], tz)
            except (TypeError, ValueError):
                raise ParseError(f"bad timestamp {row[schema.timestamp_column]!r}", line) from None
            try:
                value = float(row[schema.value_column])
            except (TypeError, ValueError):
                raise ParseError(f"bad value {row[schema.value_column]!r}", line) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite value {value!r}", line)
            if stamp.date() in excluded:
                continue
            stamps.append(stamp)
            values.append(value)

    if not stamps:
        raise ParseError("no data rows")
    order = sorted(range(len(stamps)), key=stamps.__getitem__)
    stamps = [stamps[i] for i in order]
    values = [values[i] for i in order]
    for a, b in zip(stamps, stamps[1:]):
        if a == b:
            raise DuplicateTimestamp(f"duplicate timestamp {a.isoformat()}")

    step = dt.timedelta(seconds=86400 // n)
    present = set(stamps)
    for stamp in stamps:
        offset = stamp - dt.datetime.combine(stamp.date(), dt.time())
        if offset % step:
            raise ParseError(f"timestamp {stamp.isoformat()} is not on the {step} grid")
    gaps = []
    day, last = stamps[0].date(), stamps[-1].date()
    while day <= last:
        if day not in excluded:
            midnight = dt.datetime.combine(day, dt.time())
            gaps.extend(t for t in (midnight + k * step for k in range(n)) if t not in present)
        day += dt.timedelta(days=1)
    if gaps:
        raise GapError(gaps)
    return TimeSeries(np.array(stamps, dtype="datetime64[s]"), np.array(values), n, excluded)


def write_csv(series: TimeSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "value"])
        for stamp, value in zip(series.timestamps, series.values):
            writer.writerow([stamp.item().isoformat(), repr(float(value))])


def synth_series(
    days: int = 730,
    weekday_amplitudes=DEFAULT_WEEKDAY_AMPLITUDES,
    daily_shape=DEFAULT_DAILY_SHAPE,
    yearly_amplitude: float = 0.15,
    noise_sd: float = 0.02,
    seed: int = 0,
    base: float = 1000.0,
    start=dt.date(2013, 1, 1),
    excluded=(),
) -> TimeSeries:
    """Synthetic series with yearly, weekly and daily seasonality.

    ``value = base * (1 + yearly_amplitude * sin(2 pi doy / 365)) * weekday[dow]
    * daily_shape[hour] * (1 + eps)`` with ``eps ~ N(0, noise_sd)`` i.i.d. per
    sample and ``doy`` the 1-based day of the year. ``excluded`` days are
    dropped after generation, so the other days do not depend on them.
    """
    weekday = np.asarray(weekday_amplitudes, dtype=float)
    shape = np.asarray(daily_shape, dtype=float)
    if int(days) != days or days < 14:
        raise InvalidParameter(f"days must be an integer >= 14, got {days}")
    if weekday.shape != (7,) or np.any(weekday <= 0):
        raise InvalidParameter("weekday_amplitudes must be 7 positive numbers")
    if shape.ndim != 1 or shape.size < 2 or 86400 % shape.size or np.any(shape <= 0):
        raise InvalidParameter("daily_shape must hold n >= 2 positive numbers with n dividing a day")
    if not 0 <= yearly_amplitude < 1:
        raise InvalidParameter("yearly_amplitude must lie in [0, 1)")
    if not noise_sd >= 0:
        raise InvalidParameter("noise_sd must be non-negative")
    if not base > 0:
        raise InvalidParameter("base must be positive")

    n = shape.size
    start = as_date(start)
    dates = [start + dt.timedelta(days=d) for d in range(int(days))]
    doy = np.array([d.timetuple().tm_yday for d in dates], dtype=float)
    dow = np.array([d.weekday() for d in dates])
    level = base * (1.0 + yearly_amplitude * np.sin(2.0 * np.pi * doy / 365.0)) * weekday[dow]
    values = level[:, None] * shape[None, :]
    if noise_sd > 0:
        rng = np.random.default_rng(seed)
        values = values * (1.0 + rng.normal(0.0, noise_sd, size=values.shape))
    stamps = (
        np.datetime64(start, "s")
        + np.arange(int(days) * n) * np.timedelta64(86400 // n, "s")
    )
    excluded = frozenset(as_date(d) for d in excluded)
    keep = np.repeat([d not in excluded for d in dates], n)
    return TimeSeries(stamps[keep], values.ravel()[keep], n, excluded)


def naive_forecast(series: TimeSeries, date) -> np.ndarray:
    """Copy of the cycle seven days before ``date``."""
    source = as_date(date) - dt.timedelta(days=7)
    if not series.has_day(source):
        raise MissingHistory(f"no cycle on {source} for the naive forecast of {as_date(date)}")
    return series.day_values(source).copy()


def day_seed(seed: int, date) -> int:
    """Per-day seed derived from the run seed and the calendar date."""
    state = np.random.SeedSequence([int(seed), as_date(date).toordinal()]).generate_state(1)
    return int(state[0])


class Forecaster(Protocol):
    def forecast(self, history: TimeSeries, target: dt.date, horizon: int, seed: int) -> tuple[np.ndarray, np.ndarray | None]:
        ...


@dataclass(frozen=True)
class NaiveForecaster:
    name: str = "naive"

    def forecast(self, history, target, horizon, seed):
        return naive_forecast(history, target), None


@dataclass(frozen=True)
class EnsembleForecaster:
    """Fresh ensemble per forecast day, trained on same-weekday pattern pairs."""

    strategy: DiversityStrategy
    M: int = DEFAULT_M
    m: int = 40
    alpha_max: float = 70.0
    weekday_pairing: bool = True
    jobs: int = 1
    name: str = ""

    def forecast(self, history, target, horizon, seed):
        query_day = target - dt.timedelta(days=horizon)
        if not history.has_day(query_day):
            raise MissingHistory(f"query cycle {query_day} is not in the series")
        phi = build_training_set(history, target, horizon, self.weekday_pairing)
        query = history.sequence(query_day)
        ens = train_ensemble(phi, self.strategy, self.M, RandNNConfig(self.m, self.alpha_max, seed), jobs=self.jobs)
        _, coding = encode_input(query)
        members = member_forecasts(ens, query, coding)
        return _shifted_mean(members), members


@dataclass(frozen=True, eq=False)
class DayForecast:
    date: dt.date
    actual: np.ndarray
    forecast: np.ndarray
    members: np.ndarray | None = None
    seed: int = 0


@dataclass
class RollingForecastResult:
    days: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (date, reason)

    @property
    def dates(self) -> list[dt.date]:
        return [d.date for d in self.days]

    def actuals(self) -> np.ndarray:
        return np.array([d.actual for d in self.days])

    def forecasts(self) -> np.ndarray:
        return np.array([d.forecast for d in self.days])

    def losses(self) -> np.ndarray:
        """Absolute errors, one row per forecast day."""
        return np.abs(self.actuals() - self.forecasts())

    def member_stack(self) -> np.ndarray | None:
        """Member forecasts as ``(M, days, n)`` or None when unavailable."""
        if not self.days or any(d.members is None for d in self.days):
            return None
        return np.stack([d.members for d in self.days], axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["date", "hour", "actual", "forecast"])
            for day in self.days:
                for t, (a, f) in enumerate(zip(day.actual, day.forecast)):
                    writer.writerow([day.date.isoformat(), t, repr(float(a)), repr(float(f))])


def _forecast_one(series: TimeSeries, target: dt.date, builder: Forecaster, horizon: int, seed: int):
    if not series.has_day(target):
        reason = "excluded" if target in series.excluded else "no actuals"
        return None, reason
    # Only strictly earlier days are visible to the model.
    history = series.window(end=target - dt.timedelta(days=1))
    try:
        forecast, members = builder.forecast(history, target, horizon, seed)
    except (EmptyTrainingSet, MissingHistory, ZeroDispersion) as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return DayForecast(target, series.day_values(target).copy(), np.asarray(forecast), members, seed), None


def rolling_forecast(series: TimeSeries, test_start, test_end, builder: Forecaster, horizon: int = 1,
                     seed: int = 0, jobs: int = 1) -> RollingForecastResult:
    """Forecast every day of ``[test_start, test_end]`` with a freshly trained model.

    Day ``d`` is predicted from history strictly before ``d`` using the seed
    ``day_seed(seed, d)``. Days that cannot be forecast (absent from the series,
    no query cycle, empty training set) are listed in ``skipped``. Days are
    independent, so ``jobs > 1`` processes them in a thread pool; the result is
    the same for any ``jobs``.
    """
    start, end = as_date(test_start), as_date(test_end)
    if end < start:
        raise InvalidParameter("test_end precedes test_start")
    targets = [start + dt.timedelta(days=k) for k in range((end - start).days + 1)]

    def run(target):
        return _forecast_one(series, target, builder, horizon, day_seed(seed, target))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run, targets))
    else:
        outcomes = [run(t) for t in targets]

    result = RollingForecastResult()
    for target, (day, reason) in zip(targets, outcomes):
        if day is None:
            result.skipped.append((target, reason))
        else:
            result.days.append(day)
    return result
