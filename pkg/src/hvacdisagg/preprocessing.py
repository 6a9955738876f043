"""Day classification, spike filtering, and residual-profile ensembles.

Hot days carry cooling load; mild days act as base-load templates.  Before
any of that, large infrequently used loads (dryers, water heaters) are
scrubbed out as rectangular pulses so they cannot masquerade as HVAC
cycles in the residual profiles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .errors import DataError
from .ingestion import DailyLoadMatrix, TemperatureMatrix, SLOTS_PER_DAY

log = logging.getLogger(__name__)

LABEL_HOT = "hot"
LABEL_MILD = "mild"
LABEL_EXCLUDED = "excluded"

#: Minimum number of mild days required to form a residual ensemble.
MIN_MILD_DAYS = 3


@dataclass(frozen=True)
class LiulParams:
    """Rectangular-pulse detection settings for infrequent large loads."""

    min_jump_kw: float = 2.0
    max_duration_slots: int = 12
    #: A pulse counts only if its time-of-day slot jumps this rarely across days.
    rarity_max_fraction: float = 0.20
    #: Trailing edge must drop by at least this fraction of the rise.
    similarity_ratio: float = 0.5


@dataclass(frozen=True)
class ClassifyParams:
    """Temperature bands and distribution-check settings for day labeling."""

    hot_max_c: float = 29.4     # 85 F
    mild_lo_c: float = 12.8     # 55 F
    mild_hi_c: float = 21.1     # 70 F
    max_ks: float = 0.30
    min_mild_days: int = MIN_MILD_DAYS


@dataclass(frozen=True)
class LiulEvent:
    """One detected rectangular pulse, in 15-minute slot coordinates."""

    date: date | None
    start_index: int
    end_index: int
    magnitude_kw: float
    appliance_hint: str

    def __post_init__(self):
        if self.end_index < self.start_index:
            raise DataError("LIUL event with end before start")
        if self.magnitude_kw <= 0:
            raise DataError("LIUL event magnitude must be > 0")


@dataclass(frozen=True)
class DayLabel:
    date: date
    label: str
    reasons: tuple[str, ...] = ()

    def __post_init__(self):
        if self.label not in (LABEL_HOT, LABEL_MILD, LABEL_EXCLUDED):
            raise DataError(f"unknown day label {self.label!r}")


@dataclass(frozen=True)
class ResidualEnsemble:
    """Hot-day profile minus each of K mild-day profiles (may be negative)."""

    residuals: np.ndarray          # (N, K) kW
    hot_date: date
    mild_dates: tuple[date, ...]

    def __post_init__(self):
        if self.residuals.shape[1] != len(self.mild_dates):
            raise DataError("mild_dates does not match residual columns")
        if self.residuals.shape[1] < MIN_MILD_DAYS:
            raise DataError(
                f"residual ensemble needs >= {MIN_MILD_DAYS} mild days, "
                f"got {self.residuals.shape[1]}"
            )


def _hint_for(duration_slots: int, magnitude_kw: float) -> str:
    if duration_slots <= 4 and magnitude_kw >= 3.0:
        return "water-heater-like pulse"
    if duration_slots >= 6:
        return "dryer-like pulse"
    return "short high-power pulse"


def filter_liul(
    profile: np.ndarray,
    params: LiulParams = LiulParams(),
    slot_jump_fraction: np.ndarray | None = None,
    day: date | None = None,
) -> tuple[np.ndarray, list[LiulEvent]]:
    """Remove rectangular pulses from one daily profile.

    A pulse is a rise of at least `min_jump_kw` within one slot followed,
    within `max_duration_slots`, by a fall of similar magnitude.  Detected
    pulses are bridged by linear interpolation between their boundary
    samples.  `slot_jump_fraction`, when given, holds the across-day
    frequency of such jumps per time-of-day slot; pulses whose onset slot
    jumps too often (a cycling appliance, not an infrequent one) are left
    alone.  The result never exceeds the input and never goes negative.
    """
    profile = np.asarray(profile, dtype=np.float64)
    if not np.all(np.isfinite(profile)) or np.any(profile < 0):
        raise DataError("LIUL input profile must be finite and nonnegative")
    n = len(profile)
    filtered = profile.copy()
    events: list[LiulEvent] = []

    jumps = np.diff(profile)
    if not np.any(jumps >= params.min_jump_kw):
        return filtered, events

    i = 0
    while i < n - 1:
        rise = filtered[i + 1] - filtered[i]
        if rise < params.min_jump_kw:
            i += 1
            continue
        if slot_jump_fraction is not None and (
            slot_jump_fraction[i] >= params.rarity_max_fraction
        ):
            i += 1
            continue
        # Look for the matching fall within the allowed duration.
        end = None
        j_max = min(i + params.max_duration_slots, n - 2)
        for j in range(i + 1, j_max + 1):
            fall = filtered[j] - filtered[j + 1]
            if fall >= params.similarity_ratio * rise:
                end = j
                break
        if end is None:
            i += 1
            continue
        left, right = filtered[i], filtered[end + 1]
        span = np.linspace(left, right, end - i + 2)[1:-1]
        replacement = np.minimum(filtered[i + 1 : end + 1], span)
        filtered[i + 1 : end + 1] = replacement
        events.append(
            LiulEvent(
                date=day,
                start_index=i + 1,
                end_index=end,
                magnitude_kw=float(rise),
                appliance_hint=_hint_for(end - i, float(rise)),
            )
        )
        i = end + 1

    return filtered, events


def slot_jump_fractions(loads: DailyLoadMatrix, params: LiulParams = LiulParams()) -> np.ndarray:
    """Fraction of days showing a >= min_jump_kw rise, per time-of-day slot."""
    rises = np.diff(loads.samples, axis=0) >= params.min_jump_kw
    frac = np.zeros(loads.samples_per_day)
    frac[: loads.samples_per_day - 1] = rises.mean(axis=1)
    return frac


def filter_liul_matrix(
    loads: DailyLoadMatrix, params: LiulParams = LiulParams()
) -> tuple[DailyLoadMatrix, list[LiulEvent]]:
    """Apply the pulse filter day by day, with the across-day rarity test."""
    frac = slot_jump_fractions(loads, params)
    cols = []
    events: list[LiulEvent] = []
    for k, day in enumerate(loads.day_dates):
        col, ev = filter_liul(loads.samples[:, k], params, slot_jump_fraction=frac, day=day)
        cols.append(col)
        events.extend(ev)
    out = DailyLoadMatrix(
        np.column_stack(cols), loads.day_dates,
        samples_per_day=loads.samples_per_day, dropped_days=loads.dropped_days,
    )
    return out, events


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / len(a)
    cdf_b = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.abs(cdf_a - cdf_b).max())


def verify_mild_distribution(
    candidate: np.ndarray, mild_pool_samples: np.ndarray, max_ks: float = 0.30
) -> tuple[bool, float]:
    """Check one candidate day's power distribution against the mild pool."""
    pool = np.asarray(mild_pool_samples, dtype=np.float64).ravel()
    if pool.size == 0:
        raise DataError("mild pool is empty")
    ks = ks_statistic(np.asarray(candidate).ravel(), pool)
    return ks <= max_ks, ks


def classify_days(
    loads: DailyLoadMatrix,
    temps: TemperatureMatrix,
    thresholds: ClassifyParams = ClassifyParams(),
) -> list[DayLabel]:
    """Label each day hot, mild, or excluded.

    Daily max temperature fixes the pre-label; mild candidates must then
    pass the distribution check against the pooled remaining candidates
    (leave-one-out) or they are excluded as contaminated.
    """
    if loads.day_dates != temps.day_dates:
        raise DataError("load and temperature matrices cover different days")
    t_max = temps.daily_max()

    pre: dict[date, str] = {}
    for k, day in enumerate(loads.day_dates):
        if t_max[k] >= thresholds.hot_max_c:
            pre[day] = LABEL_HOT
        elif thresholds.mild_lo_c <= t_max[k] <= thresholds.mild_hi_c:
            pre[day] = LABEL_MILD
        else:
            pre[day] = LABEL_EXCLUDED

    candidates = [d for d in loads.day_dates if pre[d] == LABEL_MILD]
    labels: list[DayLabel] = []
    for k, day in enumerate(loads.day_dates):
        if pre[day] == LABEL_HOT:
            labels.append(DayLabel(day, LABEL_HOT, ("hot-threshold",)))
            continue
        if pre[day] == LABEL_EXCLUDED:
            labels.append(DayLabel(day, LABEL_EXCLUDED, ("temperature-band",)))
            continue
        others = [d for d in candidates if d != day]
        if others:
            pool = np.concatenate([loads.column(d) for d in others])
        else:
            pool = loads.column(day)
        ok, ks = verify_mild_distribution(loads.column(day), pool, thresholds.max_ks)
        if ok:
            labels.append(DayLabel(day, LABEL_MILD, ("mild-band", "distribution-match")))
        else:
            labels.append(DayLabel(day, LABEL_EXCLUDED, ("mild-band", "distribution-mismatch")))

    n_mild = sum(1 for l in labels if l.label == LABEL_MILD)
    if n_mild < thresholds.min_mild_days:
        raise DataError(
            f"only {n_mild} mild day(s) survive classification "
            f"(need {thresholds.min_mild_days}); widen the mild temperature band "
            f"[{thresholds.mild_lo_c}, {thresholds.mild_hi_c}] C or relax max_ks"
        )
    return labels


def build_residual_ensemble(
    hot_profile: np.ndarray,
    hot_date: date,
    mild_matrix: np.ndarray,
    mild_dates,
    k_use: int = 10,
) -> ResidualEnsemble:
    """Subtract the nearest-in-calendar mild days from one hot-day profile.

    Residuals are left signed; negative excursions carry information the
    separation step needs.
    """
    mild_dates = tuple(mild_dates)
    mild_matrix = np.asarray(mild_matrix, dtype=np.float64)
    if mild_matrix.shape[1] != len(mild_dates):
        raise DataError("mild matrix and dates mismatch")
    if mild_matrix.shape[1] < MIN_MILD_DAYS:
        raise DataError(
            f"need >= {MIN_MILD_DAYS} mild days, got {mild_matrix.shape[1]}"
        )
    k_use = max(MIN_MILD_DAYS, min(k_use, mild_matrix.shape[1]))

    dist = np.array([abs((d - hot_date).days) for d in mild_dates])
    order = np.lexsort((np.arange(len(mild_dates)), dist))[:k_use]
    order = sorted(order, key=lambda idx: mild_dates[idx])

    chosen = [mild_dates[i] for i in order]
    residuals = np.asarray(hot_profile, dtype=np.float64)[:, None] - mild_matrix[:, order]
    return ResidualEnsemble(residuals, hot_date, tuple(chosen))
