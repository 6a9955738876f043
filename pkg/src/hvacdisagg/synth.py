"""Seeded synthetic corpus: households with known HVAC, base, and total.

Every stage of the pipeline gets an oracle from here: a two-state
thermostat over a discrete RC thermal model produces the HVAC truth, the
base load is a daily shape plus jittered evening activity, refrigerator
cycling, noise, and sparse multi-kW appliance pulses, and
the total is their exact sum. Weather is shared across the households of
a corpus; all randomness is derived from one seed so reruns are
byte-identical.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .ingestion import (
    SLOTS_PER_DAY,
    DailyLoadMatrix,
    TemperatureMatrix,
    day_slot_timestamps,
    ts_str,
)

log = logging.getLogger(__name__)

PROFILE_HOT = "hot"
PROFILE_MILD = "mild"
PROFILE_WARM = "warm"      # between the bands; classifier should exclude
PROFILE_SHOULDER = "shoulder"

#: (peak draw lo, peak draw hi, overnight anchor °C) per day type. Peaks
#: keep hot days inside [32, 38] and mild days inside [16, 21] even after
#: the ±0.3 °C hourly noise.
_DAY_TYPE_BANDS = {
    PROFILE_HOT: (32.5, 37.5, 18.0),
    PROFILE_MILD: (16.5, 20.5, 10.0),
    PROFILE_WARM: (22.5, 26.0, 14.0),
}

COP_THERMAL = 2.8
TEMP_NOISE_C = 0.3
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class HouseholdSpec:
    """Physical and behavioral parameters of one simulated household."""

    household_id: str
    hvac_rating_kw: float
    thermal_resistance: float      # °C per kW of heat flow
    thermal_capacitance: float     # kWh per °C
    setpoint_c: float
    deadband_c: float
    base_day_shape: np.ndarray     # (96,) kW, floor plus morning bump
    evening_bump: np.ndarray       # (96,) kW, amplitude-jittered per day
    base_noise_sigma: float
    fridge_period_slots: int
    fridge_amplitude_kw: float
    fridge_phase: int
    liul_events_per_week: float
    seed: int

    def __post_init__(self):
        shape = np.asarray(self.base_day_shape, dtype=np.float64)
        bump = np.asarray(self.evening_bump, dtype=np.float64)
        object.__setattr__(self, "base_day_shape", shape)
        object.__setattr__(self, "evening_bump", bump)
        if min(self.hvac_rating_kw, self.thermal_resistance,
               self.thermal_capacitance, self.deadband_c) <= 0:
            raise ConfigError("rating, R, C, and deadband must be positive")
        for arr, name in ((shape, "base_day_shape"), (bump, "evening_bump")):
            if arr.shape != (SLOTS_PER_DAY,) or np.any(arr < 0):
                raise ConfigError(f"{name} must be 96 nonnegative values")
        if self.base_noise_sigma < 0 or self.fridge_amplitude_kw < 0:
            raise ConfigError("noise and fridge amplitude must be nonnegative")
        if self.fridge_period_slots < 2:
            raise ConfigError("fridge period must be at least 2 slots")
        if not 0 <= self.fridge_phase < self.fridge_period_slots:
            raise ConfigError("fridge_phase must lie within one period")
        if self.liul_events_per_week < 0:
            raise ConfigError("liul_events_per_week must be nonnegative")


@dataclass(frozen=True)
class CorpusConfig:
    n_households: int = 2
    n_hot_days: int = 3
    n_mild_days: int = 2
    n_warm_days: int = 0
    start_date: str = "2023-06-01"
    seed: int = 0
    # Compressor draw kept below the LIUL jump threshold (2 kW): at 15-min
    # resolution a larger unit's short cycles would be indistinguishable
    # from the rectangular appliance pulses the filter removes.
    rating_range_kw: tuple[float, float] = (1.2, 1.9)
    setpoint_range_c: tuple[float, float] = (24.5, 25.5)
    base_scale_range: tuple[float, float] = (0.985, 1.015)
    liul_events_per_week: float = 2.0
    shuffle_days: bool = True

    def __post_init__(self):
        if self.n_households < 1:
            raise ConfigError("need at least one household")
        if self.n_days < 1:
            raise ConfigError("zero days requested")
        if min(self.n_hot_days, self.n_mild_days, self.n_warm_days) < 0:
            raise ConfigError("day counts must be nonnegative")
        for lo, hi in (self.rating_range_kw, self.setpoint_range_c,
                       self.base_scale_range):
            if not 0 < lo <= hi:
                raise ConfigError("ranges must satisfy 0 < lo <= hi")
        try:
            date.fromisoformat(self.start_date)
        except ValueError as exc:
            raise ConfigError(f"bad start_date: {exc}") from None

    @property
    def n_days(self) -> int:
        return self.n_hot_days + self.n_mild_days + self.n_warm_days


def plan_day_types(cfg: CorpusConfig, rng: np.random.Generator) -> list[str]:
    """Shuffled mix of hot/mild/warm days per the corpus counts."""
    types = ([PROFILE_HOT] * cfg.n_hot_days + [PROFILE_MILD] * cfg.n_mild_days
             + [PROFILE_WARM] * cfg.n_warm_days)
    if cfg.shuffle_days:
        order = rng.permutation(len(types))
        types = [types[i] for i in order]
    return types


def generate_temperature(
    days: int,
    profile: str = PROFILE_SHOULDER,
    seed: int = 0,
    start_date: date = date(2023, 6, 1),
    day_types: list[str] | None = None,
) -> TemperatureMatrix:
    """Hourly outdoor temperature, sinusoidal with a 15:00 peak.

    `profile` fixes every day's type; "shoulder" interleaves hot, mild,
    and warm days. An explicit `day_types` list overrides both.
    """
    if days < 1:
        raise ConfigError("days must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if day_types is None:
        if profile in _DAY_TYPE_BANDS:
            day_types = [profile] * days
        elif profile == PROFILE_SHOULDER:
            cycle = [PROFILE_HOT, PROFILE_MILD, PROFILE_HOT, PROFILE_WARM,
                     PROFILE_MILD]
            day_types = [cycle[d % len(cycle)] for d in range(days)]
        else:
            raise ConfigError(f"unknown temperature profile {profile!r}")
    if len(day_types) != days:
        raise ConfigError("day_types length must equal days")

    hours = np.arange(24, dtype=np.float64)
    cols = []
    for kind in day_types:
        try:
            lo, hi, anchor = _DAY_TYPE_BANDS[kind]
        except KeyError:
            raise ConfigError(f"unknown day type {kind!r}") from None
        t_max = rng.uniform(lo, hi)
        amp = (t_max - anchor) / 2.0
        mid = t_max - amp
        curve = mid + amp * np.cos(2.0 * np.pi * (hours - 15.0) / 24.0)
        curve += rng.uniform(-TEMP_NOISE_C, TEMP_NOISE_C, size=24)
        cols.append(curve)
    dates = tuple(start_date + timedelta(days=d) for d in range(days))
    return TemperatureMatrix(np.column_stack(cols), dates)


def default_base_shape(rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Daily base floor plus a fixed morning bump.

    The floor level is kept tight across households so that pooled
    window-energy statistics describe every household; the morning bump
    sits between the 00:00-05:00 and 09:00-17:00 accounting windows.
    """
    slots = np.arange(SLOTS_PER_DAY, dtype=np.float64)
    level = rng.uniform(0.275, 0.285)
    shape = np.full(SLOTS_PER_DAY, level)
    center = rng.uniform(26, 30)       # morning, 06:30-07:30
    amp = rng.uniform(0.20, 0.30)
    shape += amp * np.exp(-0.5 * ((slots - center) / 3.0) ** 2)
    return scale * shape


def default_evening_bump(rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Evening activity profile, one fixed hump per household.

    Centered 20:00-21:45 so it stays between the accounting windows;
    per-day variation is applied as a scalar on this fixed shape, which
    keeps any one day's base inside the span of the other days'
    profiles.
    """
    slots = np.arange(SLOTS_PER_DAY, dtype=np.float64)
    center = rng.uniform(81, 87)
    amp = rng.uniform(1.1, 1.6)
    width = rng.uniform(4.0, 5.5)
    return scale * amp * np.exp(-0.5 * ((slots - center) / width) ** 2)


SIM_STEPS_PER_SLOT = 15    # thermostat simulated on a 1-minute grid


def _simulate_thermostat(
    spec: HouseholdSpec, temps: TemperatureMatrix, rng: np.random.Generator
) -> np.ndarray:
    """Two-state compressor duty over an RC indoor-temperature model.

    The thermostat runs at 1-minute resolution and the result is averaged
    to the 15-minute metering grid: compressor cycles are shorter than a
    slot, so recorded slot values are partial-duty fractions of the
    rating rather than a clean on/off square wave.
    """
    spm = SIM_STEPS_PER_SLOT
    outdoor = np.repeat(temps.temps.T.ravel(), 4 * spm)
    n = outdoor.size
    dt_h = 0.25 / spm
    a = dt_h / (spec.thermal_resistance * spec.thermal_capacitance)
    pull = dt_h * COP_THERMAL * spec.hvac_rating_kw / spec.thermal_capacitance
    on_above = spec.setpoint_c + spec.deadband_c / 2.0
    off_below = spec.setpoint_c - spec.deadband_c / 2.0
    jitter = rng.normal(0.0, 0.01, size=n)

    hvac = np.zeros(n)
    x = min(spec.setpoint_c, outdoor[0])
    on = False
    for i in range(n):
        if x > on_above:
            on = True
        elif x < off_below:
            on = False
        if on:
            hvac[i] = spec.hvac_rating_kw
        x += a * (outdoor[i] - x) - (pull if on else 0.0) + jitter[i]
    return hvac.reshape(-1, spm).mean(axis=1).reshape(-1, SLOTS_PER_DAY).T


def _activity_noise(
    rng: np.random.Generator, sigma: float, n: int
) -> np.ndarray:
    """Appliance-like structured noise: band-pass filtered white noise.

    The kernel is a difference of Gaussians with zero DC response, so
    local swings up to ~1 h wide leave hour-scale energy sums nearly
    unchanged; it is normalized to unit power so per-slot standard
    deviation is `sigma`.
    """
    x = np.arange(-18, 19, dtype=np.float64)
    k_fast = np.exp(-0.5 * (x / 2.0) ** 2)
    k_slow = np.exp(-0.5 * (x / 6.0) ** 2)
    kern = k_fast / k_fast.sum() - k_slow / k_slow.sum()
    kern /= np.sqrt((kern * kern).sum())
    white = rng.normal(0.0, sigma, size=n + kern.size - 1)
    return np.convolve(white, kern, mode="valid")


def _base_load(
    spec: HouseholdSpec, n_days: int, rng: np.random.Generator
) -> np.ndarray:
    slots = np.arange(SLOTS_PER_DAY, dtype=np.float64)
    drift_phase = rng.uniform(0.0, 2.0 * np.pi)
    day_scale = np.exp(rng.normal(0.0, 0.05, size=n_days))
    base = np.empty((SLOTS_PER_DAY, n_days))
    period = spec.fridge_period_slots
    on_len = max(1, period // 2)
    fridge = spec.fridge_amplitude_kw * (
        ((slots + spec.fridge_phase) % period) < on_len
    )
    events_per_day = spec.liul_events_per_week / 7.0
    for d in range(n_days):
        drift = 1.0 + 0.07 * np.sin(2.0 * np.pi * d / 29.0 + drift_phase)
        # Per-day evening variation is a scalar on the household's fixed
        # bump shape, so one day's base stays a linear mix of the other
        # days' profiles.
        bump = max(0.15, 1.0 + rng.normal(0.0, 0.35))
        col = (spec.base_day_shape + bump * spec.evening_bump) * (
            day_scale[d] * drift
        )
        col = col + fridge
        col = col + rng.normal(0.0, spec.base_noise_sigma, size=SLOTS_PER_DAY)
        col = col + _activity_noise(rng, 1.2 * spec.base_noise_sigma, SLOTS_PER_DAY)
        for _ in range(rng.poisson(events_per_day)):
            start = rng.integers(0, SLOTS_PER_DAY - 8)
            dur = rng.integers(2, 9)
            col[start : start + dur] += rng.uniform(2.2, 5.0)
        base[:, d] = np.clip(col, 0.02, None)
    return base


def generate_household(
    spec: HouseholdSpec, temps: TemperatureMatrix
) -> tuple[DailyLoadMatrix, DailyLoadMatrix, DailyLoadMatrix]:
    """Simulate one household; returns (total, hvac_truth, base_truth)."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    hvac = _simulate_thermostat(spec, temps, rng)
    base = _base_load(spec, temps.temps.shape[1], rng)
    total = hvac + base
    dates = temps.day_dates
    return (
        DailyLoadMatrix(total, dates),
        DailyLoadMatrix(hvac, dates),
        DailyLoadMatrix(base, dates),
    )


def _household_spec(
    cfg: CorpusConfig, index: int, rng: np.random.Generator
) -> HouseholdSpec:
    scale = rng.uniform(*cfg.base_scale_range)
    # Fridge period divides the 96-slot day, so with the compressor
    # cycling through midnight the phase repeats identically every day.
    period = int(rng.choice([6, 8]))
    return HouseholdSpec(
        household_id=f"h{index:03d}",
        hvac_rating_kw=round(rng.uniform(*cfg.rating_range_kw), 2),
        # High R keeps duty interior (no all-afternoon saturation); low C
        # gives compressor cycles of a few minutes so metered slots hold
        # partial-duty values, and keeps the indoor lag under an hour so
        # hourly HVAC energy tracks outdoor temperature without a wide
        # morning/evening hysteresis loop.
        thermal_resistance=rng.uniform(5.0, 7.0),
        thermal_capacitance=rng.uniform(0.20, 0.30),
        setpoint_c=rng.uniform(*cfg.setpoint_range_c),
        deadband_c=rng.uniform(0.7, 1.0),
        base_day_shape=default_base_shape(rng, scale),
        evening_bump=default_evening_bump(rng, scale),
        base_noise_sigma=0.012,
        fridge_period_slots=period,
        fridge_amplitude_kw=rng.uniform(0.095, 0.115),
        fridge_phase=int(rng.integers(0, period)),
        liul_events_per_week=cfg.liul_events_per_week,
        seed=int(np.random.SeedSequence(cfg.seed, spawn_key=(1 + index,))
                 .generate_state(1)[0]),
    )


@dataclass
class Corpus:
    config: CorpusConfig
    day_types: list[str]
    temps: TemperatureMatrix
    households: list[tuple[HouseholdSpec, DailyLoadMatrix, DailyLoadMatrix,
                           DailyLoadMatrix]] = field(default_factory=list)


def generate_corpus(cfg: CorpusConfig) -> Corpus:
    weather_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    day_types = plan_day_types(cfg, weather_rng)
    temps = generate_temperature(
        cfg.n_days,
        seed=int(np.random.SeedSequence(cfg.seed, spawn_key=(0, 1)).generate_state(1)[0]),
        start_date=date.fromisoformat(cfg.start_date),
        day_types=day_types,
    )
    corpus = Corpus(cfg, day_types, temps)
    spec_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0, 2)))
    for i in range(cfg.n_households):
        spec = _household_spec(cfg, i, spec_rng)
        total, hvac, base = generate_household(spec, temps)
        corpus.households.append((spec, total, hvac, base))
    return corpus


def _write_matrix_csv(path: Path, matrix: DailyLoadMatrix, value_header: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", value_header])
        for j, day in enumerate(matrix.day_dates):
            stamps = day_slot_timestamps(day)
            col = matrix.samples[:, j]
            for i in range(matrix.samples_per_day):
                writer.writerow([ts_str(stamps[i]), f"{col[i]:.6f}"])


def _write_temperature_csv(path: Path, temps: TemperatureMatrix) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "temp_c"])
        for j, day in enumerate(temps.day_dates):
            stamps = day_slot_timestamps(day, slots=24)
            for i in range(24):
                writer.writerow([ts_str(stamps[i]), f"{temps.temps[i, j]:.6f}"])


def write_corpus(corpus: Corpus, out_dir: str | Path) -> Path:
    """Write per-household CSVs plus a manifest; returns the manifest path.

    The manifest records seeds and intent only (no wall-clock fields), so
    rerunning with the same config reproduces every byte.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "seed": corpus.config.seed,
        "start_date": corpus.config.start_date,
        "day_types": corpus.day_types,
        "day_dates": [d.isoformat() for d in corpus.temps.day_dates],
        "households": [],
    }
    for spec, total, hvac, _base in corpus.households:
        hdir = out / spec.household_id
        hdir.mkdir(exist_ok=True)
        _write_matrix_csv(hdir / "power.csv", total, "kw")
        _write_temperature_csv(hdir / "temperature.csv", corpus.temps)
        _write_matrix_csv(hdir / "hvac_truth.csv", hvac, "kw_hvac")
        manifest["households"].append({
            "id": spec.household_id,
            "hvac_rating_kw": spec.hvac_rating_kw,
            "setpoint_c": round(spec.setpoint_c, 3),
            "seed": spec.seed,
            "files": {
                "power": f"{spec.household_id}/power.csv",
                "temperature": f"{spec.household_id}/temperature.csv",
                "hvac_truth": f"{spec.household_id}/hvac_truth.csv",
            },
        })
    manifest_path = out / MANIFEST_NAME
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %d households to %s", len(corpus.households), out)
    return manifest_path


def load_manifest(corpus_dir: str | Path) -> dict:
    path = Path(corpus_dir) / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"no {MANIFEST_NAME} in {corpus_dir}")
    with open(path) as fh:
        return json.load(fh)
