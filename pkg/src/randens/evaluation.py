"""Forecast accuracy metrics and the Giacomini-White conditional predictive ability test.

Percentage errors follow the load-forecasting sign convention
``PE = 100 * (actual - forecast) / actual``: a positive MPE means underprediction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .errors import InsufficientData, ShapeMismatch, ZeroActual

METRIC_NAMES = ("mape", "median_ape", "rmse", "mpe", "std_pe")
METRIC_LABELS = {"mape": "MAPE", "median_ape": "Median(APE)", "rmse": "RMSE", "mpe": "MPE", "std_pe": "Std(PE)"}
APE_QUANTILES = (5, 25, 50, 75, 95)


@dataclass(frozen=True)
class MetricsReport:
    mape: float
    median_ape: float
    rmse: float
    mpe: float
    std_pe: float
    n_days: int
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)


def _aligned(actuals, forecasts):
    A = np.asarray(actuals, dtype=float)
    F = np.asarray(forecasts, dtype=float)
    if A.shape != F.shape:
        raise ShapeMismatch(f"actuals {A.shape} and forecasts {F.shape} differ in shape")
    if A.size == 0:
        raise ShapeMismatch("no forecasts to evaluate")
    if np.any(A <= 0):
        raise ZeroActual("percentage errors need strictly positive actuals")
    return np.atleast_2d(A), np.atleast_2d(F)


def percentage_errors(actuals, forecasts) -> np.ndarray:
    A, F = _aligned(actuals, forecasts)
    return 100.0 * (A - F) / A


def compute_metrics(actuals, forecasts) -> MetricsReport:
    """Table-style accuracy summary of aligned (day x hour) matrices."""
    A, F = _aligned(actuals, forecasts)
    pe = 100.0 * (A - F) / A
    ape = np.abs(pe)
    return MetricsReport(
        mape=float(ape.mean()),
        median_ape=float(np.median(ape)),
        rmse=float(np.sqrt(np.mean((A - F) ** 2))),
        mpe=float(pe.mean()),
        std_pe=float(pe.std()),
        n_days=A.shape[0],
        n_points=A.size,
    )


@dataclass(frozen=True)
class APEDistribution:
    sample: np.ndarray
    quantiles: dict

    def to_dict(self) -> dict:
        return {"quantiles": {str(q): v for q, v in self.quantiles.items()}, "n": int(self.sample.size)}


def ape_distribution(actuals, forecasts, quantiles=APE_QUANTILES) -> APEDistribution:
    """Sorted APE sample with linearly interpolated percentiles."""
    sample = np.sort(np.abs(percentage_errors(actuals, forecasts)).ravel())
    return APEDistribution(sample, {q: float(np.percentile(sample, q)) for q in quantiles})


@dataclass(frozen=True)
class GWTestResult:
    """Outcome of a one-sided GW test of ``H1: model B is more accurate than model A``.

    ``p_value`` is one-sided in that direction; ``p_value_two_sided`` tests
    equal conditional predictive ability. ``direction`` names the model with
    the lower average loss.
    """

    statistic: float
    p_value: float
    p_value_two_sided: float
    direction: str
    dof: int
    degenerate: bool = False
    regularized: bool = False


def gw_test(loss_a, loss_b) -> GWTestResult:
    """Multivariate Giacomini-White test on (day x hour) loss matrices.

    The daily differential ``d_t`` is the hourly mean of ``loss_a - loss_b``.
    Instruments are ``[1, d_t]``, scores ``z_t = [1, d_t] * d_{t+1}`` and the
    statistic ``T * zbar' inv(Omega) zbar`` with ``Omega = mean(z z')`` is
    compared to a chi-square with 2 degrees of freedom. The one-sided p-value
    halves the two-sided one when ``mean(d) > 0`` (A worse) and is
    ``1 - p/2`` otherwise. All-zero differentials give ``p = 1`` with
    ``degenerate`` set; a singular ``Omega`` is regularised by ``1e-12 * I``.
    """
    A = np.asarray(loss_a, dtype=float)
    B = np.asarray(loss_b, dtype=float)
    if A.shape != B.shape:
        raise ShapeMismatch(f"loss matrices differ in shape: {A.shape} vs {B.shape}")
    diff = A - B
    d = diff.mean(axis=1) if diff.ndim == 2 else diff.ravel()
    if d.size < 10:
        raise InsufficientData(f"the GW test needs at least 10 days, got {d.size}")
    dof = 2
    if not np.any(d):
        return GWTestResult(0.0, 1.0, 1.0, "none", dof, degenerate=True)

    z = np.column_stack([np.ones(d.size - 1), d[:-1]]) * d[1:, None]
    T = z.shape[0]
    zbar = z.mean(axis=0)
    omega = z.T @ z / T
    eig = np.linalg.eigvalsh(omega)
    regularized = bool(eig[0] <= 1e-12 * max(eig[-1], np.finfo(float).tiny))
    if regularized:
        omega = omega + 1e-12 * np.eye(dof)
    statistic = float(T * zbar @ np.linalg.solve(omega, zbar))
    p_two = float(stats.chi2.sf(statistic, dof))
    a_worse = d.mean() > 0
    p_one = p_two / 2.0 if a_worse else 1.0 - p_two / 2.0
    return GWTestResult(statistic, p_one, p_two, "B" if a_worse else "A", dof, regularized=regularized)


def gw_matrix(losses: dict) -> tuple[list, np.ndarray]:
    """Pairwise one-sided p-values for a heat map.

    Cell ``[i, j]`` is the p-value of "model ``j`` (x-axis) is more accurate
    than model ``i`` (y-axis)"; the diagonal is the degenerate ``p = 1``.
    """
    names = list(losses)
    P = np.ones((len(names), len(names)))
    for i, row in enumerate(names):
        for j, col in enumerate(names):
            if i != j:
                P[i, j] = gw_test(losses[row], losses[col]).p_value
    return names, P


def write_pvalue_csv(names, P, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", *names])
        for name, row in zip(names, P):
            writer.writerow([name, *(repr(float(v)) for v in row)])


def write_metrics_table(reports: dict, path) -> None:
    """Metric rows by model columns, as in a results table."""
    names = list(reports)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", *names])
        for key in METRIC_NAMES:
            writer.writerow([METRIC_LABELS[key], *(repr(getattr(reports[n], key)) for n in names)])


def write_metrics_json(report: MetricsReport, path, **extra) -> None:
    payload = {**report.to_dict(), **extra}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
