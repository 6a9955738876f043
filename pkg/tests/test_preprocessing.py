"""Pulse filtering, day classification, and residual ensembles."""

from __future__ import annotations

from datetime import date

import numpy as np
import pytest

from hvacdisagg.errors import DataError
from hvacdisagg.ingestion import DailyLoadMatrix, SLOTS_PER_DAY, TemperatureMatrix
from hvacdisagg.preprocessing import (
    ClassifyParams,
    LiulParams,
    build_residual_ensemble,
    classify_days,
    filter_liul,
    filter_liul_matrix,
    ks_statistic,
    slot_jump_fractions,
    verify_mild_distribution,
)


def test_filter_liul_flat_profile_untouched():
    profile = np.full(SLOTS_PER_DAY, 0.8)
    filtered, events = filter_liul(profile)
    assert np.array_equal(filtered, profile)
    assert events == []


def test_filter_liul_removes_rectangular_pulse():
    profile = np.full(SLOTS_PER_DAY, 0.5)
    profile[20:24] = 3.0
    filtered, events = filter_liul(profile)
    assert np.allclose(filtered, 0.5, atol=1e-12)
    assert len(events) == 1
    ev = events[0]
    assert ev.start_index == 20 and ev.end_index == 23
    assert ev.magnitude_kw == pytest.approx(2.5, abs=1e-12)
    assert ev.appliance_hint


def test_filter_liul_ignores_small_sinusoid():
    t = np.arange(SLOTS_PER_DAY)
    profile = 1.0 + 0.3 * np.sin(2 * np.pi * t / SLOTS_PER_DAY)
    # largest slot-to-slot change is far below the 2 kW jump threshold
    assert np.abs(np.diff(profile)).max() < LiulParams().min_jump_kw
    filtered, events = filter_liul(profile)
    assert np.array_equal(filtered, profile)
    assert events == []


def test_filter_liul_keeps_sustained_step():
    # a step that stays up longer than max_duration_slots is not a pulse
    profile = np.full(SLOTS_PER_DAY, 0.5)
    profile[30:60] = 3.0
    filtered, events = filter_liul(profile)
    assert np.array_equal(filtered, profile)
    assert events == []


def test_filter_liul_never_negative_never_above_input():
    rng = np.random.default_rng(3)
    profile = rng.uniform(0.0, 1.0, SLOTS_PER_DAY)
    profile[10:14] += 4.0
    filtered, _ = filter_liul(profile)
    assert np.all(filtered >= 0.0)
    assert np.all(filtered <= profile + 1e-12)


def test_filter_liul_rejects_bad_input():
    with pytest.raises(DataError, match="finite and nonnegative"):
        filter_liul(np.array([1.0, -0.1, 1.0]))


def day_matrix(columns, start=date(2023, 6, 1)):
    cols = np.column_stack(columns)
    days = tuple(date.fromordinal(start.toordinal() + i) for i in range(cols.shape[1]))
    return DailyLoadMatrix(cols, days)


def test_rarity_rule_spares_daily_cycling():
    base = np.full(SLOTS_PER_DAY, 0.5)
    cols = []
    for d in range(10):
        col = base.copy()
        col[41:46] = 3.0  # the same jump every day: a cycling appliance
        if d == 0:
            col[10:13] = 4.5  # once in ten days: an infrequent load
        cols.append(col)
    loads = day_matrix(cols)

    frac = slot_jump_fractions(loads)
    assert frac[40] == pytest.approx(1.0)
    assert frac[9] == pytest.approx(0.1)

    filtered, events = filter_liul_matrix(loads)
    # cycling block survives on every day
    assert np.allclose(filtered.samples[41:46, :], 3.0)
    # the rare pulse is bridged out
    assert np.allclose(filtered.samples[10:13, 0], 0.5, atol=1e-12)
    assert [(e.date, e.start_index) for e in events] == [(loads.day_dates[0], 10)]


def test_ks_statistic_identical_and_disjoint():
    a = np.arange(10.0)
    assert ks_statistic(a, a) == 0.0
    assert ks_statistic(a, a + 100.0) == 1.0


def test_ks_statistic_simple_half_shift():
    # {0,1} vs {1,2}: CDFs differ by 0.5 everywhere in between
    assert ks_statistic(np.array([0.0, 1.0]), np.array([1.0, 2.0])) == pytest.approx(0.5)


def test_verify_mild_distribution_monte_carlo_acceptance():
    # same-distribution samples of one day's length should almost always pass
    rng = np.random.default_rng(7)
    trials = 10_000
    passed = 0
    for _ in range(trials):
        a = rng.normal(0.0, 1.0, SLOTS_PER_DAY)
        b = rng.normal(0.0, 1.0, SLOTS_PER_DAY)
        ok, _ = verify_mild_distribution(a, b)
        passed += ok
    assert passed / trials >= 0.99


def test_verify_mild_distribution_empty_pool():
    with pytest.raises(DataError, match="mild pool is empty"):
        verify_mild_distribution(np.ones(4), np.empty(0))


def constant_temps(day_maxes, days):
    temps = np.tile(np.asarray(day_maxes, dtype=float), (24, 1))
    return TemperatureMatrix(temps, days)


def test_classify_days_temperature_bands():
    rng = np.random.default_rng(11)
    cols = [rng.uniform(0.3, 0.7, SLOTS_PER_DAY) for _ in range(5)]
    loads = day_matrix(cols)
    temps = constant_temps([35.0, 18.0, 18.5, 19.0, 25.0], loads.day_dates)
    labels = classify_days(loads, temps)
    assert [l.label for l in labels] == ["hot", "mild", "mild", "mild", "excluded"]
    assert labels[0].reasons == ("hot-threshold",)
    assert labels[1].reasons == ("mild-band", "distribution-match")
    # 25 C sits between the mild band and the hot threshold
    assert labels[4].reasons == ("temperature-band",)


def test_classify_days_excludes_distribution_mismatch():
    rng = np.random.default_rng(13)
    cols = [rng.uniform(0.3, 0.7, SLOTS_PER_DAY) for _ in range(5)]
    cols.append(np.full(SLOTS_PER_DAY, 5.0))  # in-band day that looks nothing like the rest
    loads = day_matrix(cols)
    temps = constant_temps([18.0] * 6, loads.day_dates)
    labels = classify_days(loads, temps)
    assert [l.label for l in labels[:5]] == ["mild"] * 5
    assert labels[5].label == "excluded"
    assert labels[5].reasons == ("mild-band", "distribution-mismatch")


def test_classify_days_too_few_mild():
    rng = np.random.default_rng(17)
    cols = [rng.uniform(0.3, 0.7, SLOTS_PER_DAY) for _ in range(3)]
    loads = day_matrix(cols)
    temps = constant_temps([35.0, 18.0, 18.0], loads.day_dates)
    with pytest.raises(DataError, match="widen the mild temperature band"):
        classify_days(loads, temps)


def test_classify_days_requires_matching_dates():
    rng = np.random.default_rng(19)
    loads = day_matrix([rng.uniform(0.3, 0.7, SLOTS_PER_DAY) for _ in range(3)])
    temps = constant_temps([18.0] * 3, tuple(date(2024, 1, i + 1) for i in range(3)))
    with pytest.raises(DataError, match="different days"):
        classify_days(loads, temps)


def mild_set(rng, n):
    dates = tuple(date(2023, 6, 1 + 2 * i) for i in range(n))
    return rng.uniform(0.2, 0.8, (SLOTS_PER_DAY, n)), dates


def test_residual_self_subtraction_is_zero():
    rng = np.random.default_rng(23)
    mild, dates = mild_set(rng, 3)
    hot = mild[:, 1].copy()
    ens = build_residual_ensemble(hot, date(2023, 7, 1), mild, dates, k_use=3)
    k = ens.mild_dates.index(dates[1])
    assert np.array_equal(ens.residuals[:, k], np.zeros(SLOTS_PER_DAY))


def test_residual_constant_mild_day():
    rng = np.random.default_rng(29)
    hot = rng.uniform(1.0, 4.0, SLOTS_PER_DAY)
    mild = np.column_stack(
        [np.full(SLOTS_PER_DAY, 2.0), rng.uniform(0.2, 0.8, (SLOTS_PER_DAY, 2))]
    )
    dates = (date(2023, 6, 1), date(2023, 6, 2), date(2023, 6, 3))
    ens = build_residual_ensemble(hot, date(2023, 7, 1), mild, dates, k_use=3)
    k = ens.mild_dates.index(dates[0])
    assert np.allclose(ens.residuals[:, k], hot - 2.0, atol=1e-12)


def test_residual_known_decomposition():
    # hot day = its own base + a square wave; template day = another base
    rng = np.random.default_rng(31)
    base_hot = rng.uniform(0.2, 0.6, SLOTS_PER_DAY)
    bases = rng.uniform(0.2, 0.6, (SLOTS_PER_DAY, 3))
    wave = np.zeros(SLOTS_PER_DAY)
    wave[48:72] = 2.5
    hot = base_hot + wave
    dates = tuple(date(2023, 6, d) for d in (1, 2, 3))
    ens = build_residual_ensemble(hot, date(2023, 7, 1), bases, dates, k_use=3)
    for k in range(3):
        expected = wave + (base_hot - bases[:, ens.mild_dates.index(dates[k])])
        assert np.allclose(ens.residuals[:, ens.mild_dates.index(dates[k])], expected, atol=1e-12)


def test_residual_picks_nearest_in_calendar():
    rng = np.random.default_rng(37)
    mild = rng.uniform(0.2, 0.8, (SLOTS_PER_DAY, 5))
    dates = (
        date(2023, 6, 1),
        date(2023, 6, 10),
        date(2023, 6, 13),
        date(2023, 6, 20),
        date(2023, 6, 30),
    )
    hot = np.ones(SLOTS_PER_DAY)
    ens = build_residual_ensemble(hot, date(2023, 6, 15), mild, dates, k_use=3)
    # distances 14, 5, 2, 5, 15: ties break toward the earlier day
    assert ens.mild_dates == (date(2023, 6, 10), date(2023, 6, 13), date(2023, 6, 20))


def test_residual_reconstructs_hot_profile():
    rng = np.random.default_rng(41)
    mild, dates = mild_set(rng, 6)
    hot = rng.uniform(1.0, 3.0, SLOTS_PER_DAY)
    ens = build_residual_ensemble(hot, date(2023, 6, 7), mild, dates, k_use=4)
    assert ens.residuals.shape == (SLOTS_PER_DAY, 4)
    for k, d in enumerate(ens.mild_dates):
        rebuilt = ens.residuals[:, k] + mild[:, dates.index(d)]
        assert np.allclose(rebuilt, hot, atol=1e-12)


def test_residual_requires_three_mild_days():
    rng = np.random.default_rng(43)
    mild, dates = mild_set(rng, 2)
    with pytest.raises(DataError, match="need >= 3 mild days"):
        build_residual_ensemble(np.ones(SLOTS_PER_DAY), date(2023, 6, 9), mild, dates)
