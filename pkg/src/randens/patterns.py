"""Encoding of daily cycles into unified input/output patterns and back.

An input pattern is its cycle centred on the cycle mean and divided by the
root-sum-of-squares of the centred values, so every x-pattern has zero mean
and unit Euclidean norm. The paired output pattern (the cycle ``horizon``
days later) is scaled with the *input's* mean and dispersion, because those of
the future cycle are unknown at forecast time. Decoding inverts that affine map.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import EmptyTrainingSet, NonFinite, ZeroDispersion
from .timeseries import SeasonalSequence, TimeSeries, as_date

__all__ = [
    "CodingVariables",
    "InputPattern",
    "OutputPattern",
    "SeasonalSequence",
    "TrainingSet",
    "build_training_set",
    "decode",
    "encode_input",
    "encode_matrix",
    "encode_output",
]


@dataclass(frozen=True)
class CodingVariables:
    mean: float
    dispersion: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.dispersion)):
            raise NonFinite("coding variables must be finite")
        if not self.dispersion > 0:
            raise ZeroDispersion(f"dispersion must be positive, got {self.dispersion}")


@dataclass(frozen=True)
class InputPattern:
    x: np.ndarray
    source_index: int = 0


@dataclass(frozen=True)
class OutputPattern:
    y: np.ndarray
    source_index: int = 0
    horizon: int = 1


def _values(seq) -> np.ndarray:
    values = seq.values if isinstance(seq, SeasonalSequence) else np.asarray(seq, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("a sequence needs at least 2 values")
    if not np.all(np.isfinite(values)):
        raise NonFinite("sequence contains NaN or infinite values")
    return values


def _zero_dispersion_mask(E: np.ndarray, disp: np.ndarray) -> np.ndarray:
    # Centring a constant row may leave round-off of order eps * |value|.
    scale = np.max(np.abs(E), axis=-1)
    return disp <= E.shape[-1] * np.finfo(float).eps * scale


def encode_matrix(E, *, strict: bool = True):
    """Vectorised input encoding of the rows of ``E`` (shape ``(N, n)``).

    Returns ``(X, means, dispersions)``. With ``strict=False`` rows of zero
    dispersion are returned as NaN instead of raising.
    """
    E = np.asarray(E, dtype=float)
    if E.ndim != 2 or E.shape[1] < 2:
        raise ValueError("expected an (N, n) matrix with n >= 2")
    if not np.all(np.isfinite(E)):
        raise NonFinite("sequences contain NaN or infinite values")
    means = E.mean(axis=1)
    centred = E - means[:, None]
    disp = np.sqrt(np.einsum("ij,ij->i", centred, centred))
    zero = _zero_dispersion_mask(E, disp)
    if np.any(zero):
        if strict:
            raise ZeroDispersion(f"{int(zero.sum())} sequence(s) have zero dispersion")
        disp = np.where(zero, np.nan, disp)
    return centred / disp[:, None], means, disp


def encode_input(seq) -> tuple[InputPattern, CodingVariables]:
    """Encode one cycle as an x-pattern and return the coding variables used.

    >>> x, c = encode_input([1.0, 2.0, 3.0])
    >>> np.round(x.x, 5).tolist(), c.mean, round(c.dispersion, 5)
    ([-0.70711, 0.0, 0.70711], 2.0, 1.41421)
    """
    values = _values(seq)
    X, means, disp = encode_matrix(values[None, :])
    index = seq.index if isinstance(seq, SeasonalSequence) else 0
    return InputPattern(X[0], index), CodingVariables(float(means[0]), float(disp[0]))


def encode_output(future_seq, coding: CodingVariables, horizon: int = 1, source_index: int | None = None) -> OutputPattern:
    values = _values(future_seq)
    y = (values - coding.mean) / coding.dispersion
    if source_index is None:
        source_index = future_seq.index - horizon if isinstance(future_seq, SeasonalSequence) else 0
    return OutputPattern(y, source_index, horizon)


def decode(y_hat, coding: CodingVariables) -> np.ndarray:
    """Map a forecast pattern back to the original units: ``y * dispersion + mean``."""
    y = y_hat.y if isinstance(y_hat, OutputPattern) else np.asarray(y_hat, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NonFinite("forecast pattern contains NaN or infinite values")
    return y * coding.dispersion + coding.mean


@dataclass(frozen=True)
class TrainingSet:
    """Pattern pairs stacked row-wise: ``X`` and ``Y`` have shape ``(N, n)``.

    ``means``/``dispersions`` are the coding variables of each input cycle;
    ``input_dates``/``output_dates`` record which days every pair was built from.
    """

    X: np.ndarray
    Y: np.ndarray
    means: np.ndarray | None = None
    dispersions: np.ndarray | None = None
    input_dates: tuple = ()
    output_dates: tuple = ()
    indices: tuple = ()
    horizon: int = 1

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y must have the same number of rows")
        if X.shape[0] < 1:
            raise EmptyTrainingSet("training set has no pairs")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.Y.shape[1]

    @cached_property
    def pairs(self) -> list[tuple[InputPattern, OutputPattern]]:
        idx = self.indices or tuple(range(1, self.N + 1))
        return [
            (InputPattern(self.X[k], idx[k]), OutputPattern(self.Y[k], idx[k], self.horizon))
            for k in range(self.N)
        ]

    def subset(self, rows) -> TrainingSet:
        rows = np.asarray(rows, dtype=int)
        pick = lambda seq: tuple(seq[r] for r in rows) if seq else ()
        return TrainingSet(
            self.X[rows],
            self.Y[rows],
            None if self.means is None else self.means[rows],
            None if self.dispersions is None else self.dispersions[rows],
            pick(self.input_dates),
            pick(self.output_dates),
            pick(self.indices),
            self.horizon,
        )


def build_training_set(series: TimeSeries, query_date, horizon: int = 1, weekday_pairing: bool = True) -> TrainingSet:
    """Collect every historical (x, y) pair usable to forecast ``query_date``.

    ``query_date`` is the day being forecast; its query input is the day
    ``horizon`` days earlier. A pair (day ``d``, day ``d + horizon``) qualifies
    when both days are present in the series (excluded days are absent) and the
    output day is strictly before ``query_date``. With ``weekday_pairing`` the
    input and output weekdays must match those of the query and forecast days.
    Pairs are ordered by input day.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    target = as_date(query_date)
    query_input = target - dt.timedelta(days=horizon)
    dates, cycles, _ = series._cycle_table
    rows_by_date = series._cycle_table[2]

    in_rows, out_rows = [], []
    for row, day in enumerate(dates):
        out_day = day + dt.timedelta(days=horizon)
        if out_day >= target:
            break
        out_row = rows_by_date.get(out_day)
        if out_row is None:
            continue
        if weekday_pairing and (day.weekday() != query_input.weekday() or out_day.weekday() != target.weekday()):
            continue
        in_rows.append(row)
        out_rows.append(out_row)

    if not in_rows:
        raise EmptyTrainingSet(f"no training pairs available for {target} (horizon {horizon})")

    E_in = cycles[in_rows]
    X, means, disp = encode_matrix(E_in)
    Y = (cycles[out_rows] - means[:, None]) / disp[:, None]
    return TrainingSet(
        X,
        Y,
        means,
        disp,
        tuple(dates[r] for r in in_rows),
        tuple(dates[r] for r in out_rows),
        tuple(r + 1 for r in in_rows),
        horizon,
    )
