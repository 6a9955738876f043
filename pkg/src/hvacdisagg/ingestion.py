"""CSV ingestion and per-day matrix assembly.

Meter readings arrive as `timestamp,kw` CSVs (ISO-8601 local-naive
timestamps, average kW per interval) and weather as `timestamp,temp_c`.
Everything downstream works on rectangular per-day matrices: 96 slots per
day for 15-minute power, 24 rows per day for hourly temperature.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440
#: Working resolution; 96 slots of 15 minutes per day.
SLOTS_PER_DAY = 96
SLOT_MINUTES = 15
#: kW sampled every 15 minutes -> kWh conversion factor.
KWH_PER_SLOT = 0.25

TEMP_SANITY_C = (-40.0, 60.0)


@dataclass(frozen=True)
class TimeSeries:
    """Irregular or gridded series of (timestamp, value) pairs.

    Timestamps are timezone-naive local time, strictly increasing.  Values
    are finite; power series are additionally nonnegative.
    """

    timestamps: np.ndarray  # datetime64[s], strictly increasing
    values: np.ndarray      # float64

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise DataError("timestamps and values length mismatch")
        if len(self.timestamps) == 0:
            raise DataError("empty series")
        if not np.all(np.isfinite(self.values)):
            raise DataError("series contains non-finite values")
        deltas = np.diff(self.timestamps.astype("datetime64[s]").astype(np.int64))
        if np.any(deltas <= 0):
            i = int(np.argmax(deltas <= 0))
            raise DataError(
                f"timestamps not strictly increasing at {ts_str(self.timestamps[i + 1])}"
            )

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class DailyLoadMatrix:
    """N x D grid of 15-minute average power (kW), one column per day."""

    samples: np.ndarray            # (SLOTS_PER_DAY, D) float64
    day_dates: tuple[date, ...]    # D unique, sorted dates
    samples_per_day: int = SLOTS_PER_DAY
    dropped_days: tuple[date, ...] = field(default=(), compare=False)

    def __post_init__(self):
        n, d = self.samples.shape
        if n != self.samples_per_day:
            raise DataError(f"expected {self.samples_per_day} rows, got {n}")
        if d != len(self.day_dates):
            raise DataError("day_dates does not match column count")
        if list(self.day_dates) != sorted(set(self.day_dates)):
            raise DataError("day_dates must be unique and sorted")
        if not np.all(np.isfinite(self.samples)) or np.any(self.samples < 0):
            raise DataError("load matrix cells must be finite and >= 0")

    @property
    def n_days(self) -> int:
        return self.samples.shape[1]

    def column(self, day: date) -> np.ndarray:
        return self.samples[:, self.day_dates.index(day)]


@dataclass(frozen=True)
class TemperatureMatrix:
    """24 x D grid of hourly outdoor temperature (deg C)."""

    temps: np.ndarray              # (24, D) float64
    day_dates: tuple[date, ...]

    def __post_init__(self):
        n, d = self.temps.shape
        if n != 24:
            raise DataError(f"expected 24 hourly rows, got {n}")
        if d != len(self.day_dates):
            raise DataError("day_dates does not match column count")
        lo, hi = TEMP_SANITY_C
        if not np.all(np.isfinite(self.temps)) or np.any(self.temps < lo) or np.any(self.temps > hi):
            raise DataError(f"temperatures outside sanity range [{lo}, {hi}] C")

    def column(self, day: date) -> np.ndarray:
        return self.temps[:, self.day_dates.index(day)]

    def daily_max(self) -> np.ndarray:
        return self.temps.max(axis=0)


def ts_str(t: np.datetime64) -> str:
    return str(np.datetime64(t, "s"))


def _parse_csv(source, value_column: str) -> TimeSeries:
    """Shared two-column CSV reader; sorts rows and rejects duplicates."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    if isinstance(source, str):
        text = io.StringIO(source)
    elif hasattr(source, "read"):
        raw = source.read()
        text = io.StringIO(raw.decode("utf-8") if isinstance(raw, bytes) else raw)
    else:
        raise DataError(f"unreadable CSV source: {type(source)!r}")

    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty series") from None
    header = [h.strip().lower() for h in header]
    if header != ["timestamp", value_column]:
        raise DataError(
            f"malformed header {header!r}, expected ['timestamp', '{value_column}']"
        )

    stamps: list[datetime] = []
    values: list[float] = []
    bad_rows: list[int] = []
    for row_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        try:
            if len(row) != 2:
                raise ValueError("column count")
            t = datetime.fromisoformat(row[0].strip())
            if t.tzinfo is not None:
                t = t.replace(tzinfo=None)
            v = float(row[1])
            if not math.isfinite(v):
                raise ValueError("non-finite value")
            if value_column != "temp_c" and v < 0:
                raise ValueError("negative power")
        except ValueError:
            bad_rows.append(row_no)
            continue
        stamps.append(t)
        values.append(v)

    if bad_rows:
        log.warning(
            "%s: rejected %d unparseable row(s): %s",
            value_column,
            len(bad_rows),
            ", ".join(str(r) for r in bad_rows[:20]) + ("..." if len(bad_rows) > 20 else ""),
        )
    if not stamps:
        raise DataError("empty series")

    order = np.argsort(np.array(stamps))
    t_arr = np.array([np.datetime64(stamps[i], "s") for i in order])
    v_arr = np.array([values[i] for i in order], dtype=np.float64)

    dup = np.nonzero(np.diff(t_arr.astype(np.int64)) == 0)[0]
    if dup.size:
        raise DataError(f"duplicate timestamp {ts_str(t_arr[dup[0]])}")
    return TimeSeries(t_arr, v_arr)


def load_power_csv(source) -> TimeSeries:
    """Parse a `timestamp,kw` CSV into a sorted power TimeSeries.

    Unparseable rows are skipped and reported (with their row numbers) via
    the module logger; duplicate timestamps are an error.
    """
    return _parse_csv(source, "kw")


def load_temperature_csv(source) -> TimeSeries:
    """Parse a `timestamp,temp_c` CSV into a sorted temperature TimeSeries."""
    return _parse_csv(source, "temp_c")


def load_truth_csv(source) -> TimeSeries:
    """Parse a `timestamp,kw_hvac` sub-metered ground-truth CSV."""
    return _parse_csv(source, "kw_hvac")


def resample_mean(ts: TimeSeries, interval_minutes: int = SLOT_MINUTES) -> TimeSeries:
    """Average samples into [t, t+interval) bins anchored at midnight.

    Bins containing no samples are simply absent from the output; day
    assembly treats absent slots as missing.  Already-gridded input passes
    through unchanged, so the operation is idempotent.
    """
    if interval_minutes <= 0 or MINUTES_PER_DAY % interval_minutes != 0:
        raise DataError(f"interval {interval_minutes} min does not divide 24 h")
    epoch = ts.timestamps.astype("datetime64[s]").astype(np.int64)
    bin_ids = epoch // (interval_minutes * 60)
    uniq, inverse = np.unique(bin_ids, return_inverse=True)
    sums = np.zeros(len(uniq))
    counts = np.zeros(len(uniq))
    np.add.at(sums, inverse, ts.values)
    np.add.at(counts, inverse, 1.0)
    out_t = (uniq * (interval_minutes * 60)).astype("datetime64[s]")
    return TimeSeries(out_t, sums / counts)


def _interpolate_missing(values: np.ndarray, present: np.ndarray) -> np.ndarray:
    """Fill missing slots by linear interpolation, nearest at the edges."""
    idx = np.arange(len(values))
    filled = values.copy()
    filled[~present] = np.interp(idx[~present], idx[present], values[present])
    return filled


def build_day_matrix(ts: TimeSeries, max_missing_fraction: float = 0.05) -> DailyLoadMatrix:
    """Arrange a 15-minute power series into a 96 x D day matrix.

    Days missing at most `max_missing_fraction` of their 96 slots are kept
    with gaps linearly interpolated; worse days are dropped and reported in
    `dropped_days`.
    """
    epoch = ts.timestamps.astype("datetime64[s]").astype(np.int64)
    if np.any(epoch % (SLOT_MINUTES * 60) != 0):
        raise DataError("series is not on the 15-minute grid; resample first")
    day_ids = epoch // 86400
    slot_ids = (epoch % 86400) // (SLOT_MINUTES * 60)

    kept_cols: list[np.ndarray] = []
    kept_dates: list[date] = []
    dropped: list[date] = []
    for day_id in np.unique(day_ids):
        mask = day_ids == day_id
        col = np.full(SLOTS_PER_DAY, np.nan)
        col[slot_ids[mask]] = ts.values[mask]
        present = ~np.isnan(col)
        missing = SLOTS_PER_DAY - int(present.sum())
        day_date = (np.datetime64(int(day_id), "D")).astype(date)
        if missing > max_missing_fraction * SLOTS_PER_DAY:
            dropped.append(day_date)
            continue
        if missing:
            col = _interpolate_missing(col, present)
        kept_cols.append(col)
        kept_dates.append(day_date)

    if dropped:
        log.warning("dropped %d day(s) with too many gaps: %s",
                    len(dropped), ", ".join(d.isoformat() for d in dropped))
    if not kept_cols:
        raise DataError("zero usable days after gap filtering")
    return DailyLoadMatrix(
        np.column_stack(kept_cols), tuple(kept_dates), dropped_days=tuple(dropped)
    )


def build_temperature_matrix(ts: TimeSeries, day_dates) -> TemperatureMatrix:
    """Assemble a 24 x D hourly temperature matrix for the given dates.

    Missing hours are linearly interpolated; a day with more than 6 missing
    hours, or a date absent from the series entirely, is an error.
    """
    day_dates = tuple(day_dates)
    epoch = ts.timestamps.astype("datetime64[s]").astype(np.int64)
    lookup = {}
    for e, v in zip(epoch, ts.values):
        if e % 3600 == 0:
            lookup[e] = v

    cols = []
    for day_date in day_dates:
        base = int(np.datetime64(day_date).astype("datetime64[s]").astype(np.int64))
        col = np.full(24, np.nan)
        for h in range(24):
            v = lookup.get(base + 3600 * h)
            if v is not None:
                col[h] = v
        present = ~np.isnan(col)
        n_missing = 24 - int(present.sum())
        if n_missing == 24:
            raise DataError(f"temperature series does not cover {day_date.isoformat()}")
        if n_missing > 6:
            raise DataError(
                f"temperature for {day_date.isoformat()} is missing {n_missing} hours (> 6)"
            )
        if n_missing:
            col = _interpolate_missing(col, present)
        cols.append(col)
    return TemperatureMatrix(np.column_stack(cols), day_dates)


def day_slot_timestamps(day_date: date, slots: int = SLOTS_PER_DAY) -> list[datetime]:
    """Timestamps of the `slots` interval starts of one day."""
    start = datetime(day_date.year, day_date.month, day_date.day)
    step = timedelta(minutes=MINUTES_PER_DAY // slots)
    return [start + i * step for i in range(slots)]
