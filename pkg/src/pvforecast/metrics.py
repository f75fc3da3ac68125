"""Forecast quality metrics.

All metrics flatten their inputs and treat every time step of every day
as one point. Conventions that matter for reproducibility:

* percentage error normalizes by the summed magnitude of the target,
  not per point, so night slots with zero power cannot blow it up;
* the distribution divergence bins both series over their shared value
  range and smooths both histograms before comparing, which keeps the
  result finite and non-negative even when a bin is empty on one side;
* the concordance correlation uses population (biased) moments.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from pvforecast.data import DataError

__all__ = [
    "DISTRIBUTION_BINS",
    "MetricsReport",
    "ccc",
    "evaluate",
    "kl_divergence",
    "mse",
    "percentage_error",
]

DISTRIBUTION_BINS = 50
_SMOOTHING = 1.0e-10


def _flatten_pair(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(y_true, dtype=np.float64).reshape(-1)
    p = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if t.size == 0:
        raise DataError("metrics need at least one point")
    if t.shape != p.shape:
        raise DataError(f"metric inputs differ in size: {t.size} vs {p.size}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
        raise DataError("metric inputs must be finite")
    return t, p


def mse(y_true, y_pred) -> float:
    """Mean squared error over all points."""
    t, p = _flatten_pair(y_true, y_pred)
    return float(np.mean((t - p) ** 2))


def percentage_error(y_true, y_pred) -> float:
    """Aggregate absolute error as a percentage of aggregate magnitude.

    100 * sum|y - yhat| / sum|y|. Undefined when the target is zero
    everywhere; that case raises instead of returning infinity.
    """
    t, p = _flatten_pair(y_true, y_pred)
    denominator = np.abs(t).sum()
    if denominator == 0.0:
        raise DataError("percentage error undefined for an all-zero target")
    return float(100.0 * np.abs(t - p).sum() / denominator)


def kl_divergence(y_true, y_pred, bins: int = DISTRIBUTION_BINS) -> float:
    """Divergence between the value distributions of target and forecast.

    Both series are histogrammed over the shared [min, max] of their
    union; both histograms get the same additive smoothing and are then
    renormalized, so the result is exactly non-negative. A degenerate
    range (all values identical) carries no distribution information and
    scores 0.
    """
    t, p = _flatten_pair(y_true, y_pred)
    if bins < 1:
        raise DataError(f"bin count must be >= 1, got {bins}")
    low = min(t.min(), p.min())
    high = max(t.max(), p.max())
    if low == high:
        return 0.0
    edges = np.linspace(low, high, bins + 1)
    t_hist = np.histogram(t, bins=edges)[0].astype(np.float64)
    p_hist = np.histogram(p, bins=edges)[0].astype(np.float64)
    t_prob = (t_hist + _SMOOTHING) / (t_hist.sum() + bins * _SMOOTHING)
    p_prob = (p_hist + _SMOOTHING) / (p_hist.sum() + bins * _SMOOTHING)
    return float(np.sum(t_prob * np.log(t_prob / p_prob)))


def ccc(y_true, y_pred) -> float:
    """Concordance correlation: agreement with the identity line.

    2*cov / (var_t + var_p + (mean_t - mean_p)^2) with population
    moments. Identical constant series agree perfectly (1); otherwise a
    zero denominator cannot occur, and a constant series on one side
    yields 0 through the zero covariance.
    """
    t, p = _flatten_pair(y_true, y_pred)
    mean_t, mean_p = t.mean(), p.mean()
    var_t = np.mean((t - mean_t) ** 2)
    var_p = np.mean((p - mean_p) ** 2)
    covariance = np.mean((t - mean_t) * (p - mean_p))
    denominator = var_t + var_p + (mean_t - mean_p) ** 2
    if denominator == 0.0:
        return 1.0  # both series constant and equal
    return float(2.0 * covariance / denominator)


@dataclass
class MetricsReport:
    """Evaluation summary over a set of day-ahead forecasts."""

    mse: float
    pe: float
    kld: float
    ccc: float
    n_days: int
    n_points: int

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def evaluate(y_true, y_pred) -> MetricsReport:
    """Score day-wise targets against forecasts with every metric.

    Inputs are (n_days, steps) or 1-D; all points are pooled.
    """
    t = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    if t.shape != p.shape:
        raise DataError(f"evaluation inputs differ in shape: {t.shape} vs {p.shape}")
    n_days = 1 if t.ndim <= 1 else int(np.prod(t.shape[:-1]))
    return MetricsReport(
        mse=mse(t, p),
        pe=percentage_error(t, p),
        kld=kl_divergence(t, p),
        ccc=ccc(t, p),
        n_days=n_days,
        n_points=int(t.size),
    )
