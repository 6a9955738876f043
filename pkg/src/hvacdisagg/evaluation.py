"""Disaggregation metrics against sub-metered truth, plus benchmarks.

The headline metric follows the printed normalization convention: the
sum of per-slot absolute errors over all days is divided by the rating
and by the number of days only (not the slot count), so a constant
0.01 kW error over one 96-slot day at a 4 kW rating reads as 24 %.
Hourly error statistics and the per-customer histogram use the
dimensionless fraction |error|/rating instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

HIST_BIN_WIDTH = 0.05
HIST_MAX = 0.5

METHOD_AVERAGE = "average"
METHOD_ICA = "ica"
METHOD_FINETUNED = "finetuned"


def _samples(x) -> np.ndarray:
    """Accept a DailyLoadMatrix or a plain (N, D) array."""
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)


def rating_from_truth(truth, percentile: float = 99.0) -> float:
    """Proxy for the HVAC nameplate rating: a high percentile of truth."""
    values = _samples(truth).ravel()
    rating = float(np.percentile(values, percentile))
    if rating <= 0:
        raise DataError("truth HVAC samples give a nonpositive rating")
    return rating


def nmae(est, truth, rating_kw: float) -> float:
    """Normalized mean absolute error, percent.

    Sum of |est - truth| over all N·M samples, divided by rating and by
    the day count M (per-day normalization, not per-sample).
    """
    e, t = _samples(est), _samples(truth)
    if e.shape != t.shape:
        raise DataError(f"shape mismatch {e.shape} vs {t.shape}")
    if rating_kw <= 0:
        raise DataError("rating must be positive")
    m = 1 if e.ndim == 1 else e.shape[1]
    return 100.0 * float(np.abs(e - t).sum()) / (rating_kw * m)


def nee(est, truth) -> float:
    """Normalized energy error, percent: |sum est - sum truth| / sum truth."""
    e, t = _samples(est), _samples(truth)
    if e.shape != t.shape:
        raise DataError(f"shape mismatch {e.shape} vs {t.shape}")
    total = float(t.sum())
    if total <= 0:
        raise DataError("truth has zero total energy")
    return 100.0 * abs(float(e.sum()) - total) / total


def hourly_error_stats(est, truth, rating_kw: float) -> np.ndarray:
    """Per-hour error quartiles across days, as fractions of the rating.

    Returns a (24, 5) array of min/Q1/median/Q3/max where the sample for
    hour h on day d is mean(|est - truth| over the hour's slots)/rating.
    """
    e, t = _samples(est), _samples(truth)
    if e.shape != t.shape:
        raise DataError(f"shape mismatch {e.shape} vs {t.shape}")
    if rating_kw <= 0:
        raise DataError("rating must be positive")
    if e.ndim == 1:
        e, t = e[:, None], t[:, None]
    n, d = e.shape
    if n % 24 != 0:
        raise DataError("profile length must be a multiple of 24")
    err = np.abs(e - t).reshape(24, n // 24, d).mean(axis=1) / rating_kw
    return np.percentile(err, [0, 25, 50, 75, 100], axis=1).T


def benchmark_average_mild(hot, mild) -> np.ndarray:
    """Average-mild baseline: hot day minus the mean mild profile, floored."""
    h, m = _samples(hot), _samples(mild)
    if m.ndim == 1:
        m = m[:, None]
    if m.shape[1] < 1:
        raise DataError("need at least one mild day")
    mean_mild = m.mean(axis=1)
    if h.ndim == 1:
        return np.maximum(0.0, h - mean_mild)
    return np.maximum(0.0, h - mean_mild[:, None])


def nmae_histogram(per_customer_nmae: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Counts over fixed bins of width 0.05 on [0, 0.5].

    Input values are fractions (percent/100); values beyond 0.5 land in
    the last bin so no customer is silently dropped.
    """
    vals = np.asarray(per_customer_nmae, dtype=np.float64)
    if vals.size == 0:
        raise DataError("no nMAE values to bin")
    edges = np.arange(0.0, HIST_MAX + HIST_BIN_WIDTH / 2, HIST_BIN_WIDTH)
    clipped = np.clip(vals, 0.0, HIST_MAX - 1e-12)
    counts, _ = np.histogram(clipped, bins=edges)
    return counts, edges


@dataclass
class EvalReport:
    """Metrics for one method across the evaluated customers."""

    method: str
    per_customer_nmae: np.ndarray    # percent
    per_customer_nee: np.ndarray     # percent
    nmae_mean: float
    nmae_std: float
    nee_mean: float
    hourly_quartiles: np.ndarray     # (24, 5) fractions
    rating_kw: dict[str, float]

    def __post_init__(self):
        if np.any(self.per_customer_nmae < 0) or np.any(self.per_customer_nee < 0):
            raise DataError("metrics must be nonnegative")
        q = self.hourly_quartiles
        if q.shape != (24, 5) or np.any(np.diff(q, axis=1) < -1e-12):
            raise DataError("hourly quartiles must be (24, 5) and ordered")


def evaluate_method(
    method: str,
    est_by_customer: dict[str, np.ndarray],
    truth_by_customer: dict[str, np.ndarray],
    ratings: dict[str, float],
) -> EvalReport:
    """Per-customer metrics and pooled hourly quartiles for one method."""
    ids = sorted(est_by_customer)
    if ids != sorted(truth_by_customer) or ids != sorted(ratings):
        raise DataError("customer sets differ between estimates, truth, ratings")
    if not ids:
        raise DataError("no customers to evaluate")
    nmaes, nees, hourly = [], [], []
    for cid in ids:
        est, truth, rating = est_by_customer[cid], truth_by_customer[cid], ratings[cid]
        nmaes.append(nmae(est, truth, rating))
        nees.append(nee(est, truth))
        e, t = _samples(est), _samples(truth)
        if e.ndim == 1:
            e, t = e[:, None], t[:, None]
        hourly.append(np.abs(e - t).reshape(24, -1, e.shape[1]).mean(axis=1) / rating)
    pooled = np.concatenate(hourly, axis=1)
    quartiles = np.percentile(pooled, [0, 25, 50, 75, 100], axis=1).T
    nmaes = np.array(nmaes)
    nees = np.array(nees)
    return EvalReport(
        method=method,
        per_customer_nmae=nmaes,
        per_customer_nee=nees,
        nmae_mean=float(nmaes.mean()),
        nmae_std=float(nmaes.std(ddof=1)) if len(ids) > 1 else 0.0,
        nee_mean=float(nees.mean()),
        hourly_quartiles=quartiles,
        rating_kw=dict(ratings),
    )
