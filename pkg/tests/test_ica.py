"""Whitening, two-component separation, and HVAC source selection."""

from __future__ import annotations

import numpy as np
import pytest

from hvacdisagg.errors import DataError
from hvacdisagg.ica import (
    IcaOptions,
    center_and_whiten,
    fastica_2comp,
    hourly_sums,
    run_ica,
    select_hvac,
)

from helpers import cosine_day_temps, square_wave_ensemble

N = 96


def sample_cov(x):
    c = x - x.mean(axis=0)
    return c.T @ c / (len(x) - 1)


def test_whiten_orthogonal_patterns_gives_identity_cov():
    t = np.arange(N)
    p1 = np.cos(2 * np.pi * t / N)
    p2 = np.sin(2 * np.pi * t / N)
    ens = np.column_stack([p1, p2, p1, p2])
    whitened, model = center_and_whiten(ens)
    assert whitened.shape == (N, 2)
    assert np.linalg.norm(sample_cov(whitened) - np.eye(2)) <= 1e-10
    assert model.whitening_matrix.shape == (2, 4)


def test_whiten_random_ensemble_identity_cov():
    rng = np.random.default_rng(0)
    ens = rng.normal(0.0, 1.0, (N, 10))
    whitened, _ = center_and_whiten(ens)
    assert np.linalg.norm(sample_cov(whitened) - np.eye(2), "fro") <= 1e-8


def test_whiten_identical_columns_is_rank_error():
    col = np.random.default_rng(1).uniform(0.0, 2.0, N)
    ens = np.column_stack([col] * 5)
    with pytest.raises(DataError, match="insufficient ensemble rank"):
        center_and_whiten(ens)


def test_whiten_needs_three_columns():
    with pytest.raises(DataError, match=">= 3 columns"):
        center_and_whiten(np.random.default_rng(2).normal(size=(N, 2)))


def test_fastica_recovers_square_wave_source():
    ens, wave = square_wave_ensemble(seed=0)
    model = run_ica(ens, IcaOptions(seed=0))
    assert model.converged
    est = select_hvac(model, cosine_day_temps(), ens.mean(axis=1))
    assert np.corrcoef(est.values, wave)[0, 1] >= 0.95
    assert np.all(est.values >= 0.0)


def test_fastica_gaussian_pair_does_not_crash():
    # two Gaussian sources are unidentifiable; the fit must still return
    rng = np.random.default_rng(5)
    ens = rng.normal(0.0, 1.0, (N, 8))
    model = run_ica(ens, IcaOptions(seed=5))
    assert model.sources.shape == (N, 2)
    assert isinstance(model.converged, bool)
    r = model.rotation
    assert np.allclose(r @ r.T, np.eye(2), atol=1e-12)


def test_fastica_zero_iteration_budget():
    ens, _ = square_wave_ensemble(seed=3)
    whitened, wm = center_and_whiten(ens)
    model = fastica_2comp(whitened, wm, IcaOptions(max_iters=0, seed=3))
    assert model.converged is False
    assert model.convergence_iters == 0
    # the seeded initial rotation comes back unmodified and orthogonal
    assert np.allclose(model.rotation @ model.rotation.T, np.eye(2), atol=1e-12)


def test_sources_reconstruct_centered_ensemble():
    ens, _ = square_wave_ensemble(seed=4)
    model = run_ica(ens, IcaOptions(seed=4))
    centered = ens - ens.mean(axis=0)
    rebuilt = model.sources @ model.mixing_A_hat
    rel = np.linalg.norm(rebuilt - centered, "fro") / np.linalg.norm(centered, "fro")
    assert rel <= 1e-6


def test_select_hvac_scale_recovers_known_amplitude():
    # every column carries the full 3 kW wave, as residuals do
    rng = np.random.default_rng(6)
    wave = np.zeros(N)
    wave[44:74] = 3.0
    noise = rng.laplace(0.0, 0.4, N)
    mixing = np.vstack([np.ones(10), rng.normal(0.0, 1.0, 10)])
    ens = np.column_stack([wave, noise]) @ mixing
    model = run_ica(ens, IcaOptions(seed=6))
    est = select_hvac(model, cosine_day_temps(), ens.mean(axis=1))
    # judge the scale by the plateau level; the max also carries noise leakage
    assert est.values[44:74].mean() == pytest.approx(3.0, rel=0.05)
    assert est.values[:40].mean() == pytest.approx(0.0, abs=0.05)
    assert not est.weak_temperature_link


def test_select_hvac_sign_flip_invariant():
    ens, _ = square_wave_ensemble(seed=7)
    model = run_ica(ens, IcaOptions(seed=7))
    temps = cosine_day_temps()
    first = select_hvac(model, temps, ens.mean(axis=1))
    model.sources[:, first.component_index] *= -1.0
    second = select_hvac(model, temps, ens.mean(axis=1))
    assert second.component_index == first.component_index
    assert np.array_equal(second.values, first.values)


def test_select_hvac_flags_weak_temperature_link(caplog):
    rng = np.random.default_rng(8)
    ens = rng.normal(0.0, 1.0, (N, 8))
    model = run_ica(ens, IcaOptions(seed=8))
    with caplog.at_level("WARNING"):
        est = select_hvac(model, np.full(24, 25.0), ens.mean(axis=1))
    assert est.weak_temperature_link
    assert "weak temperature linkage" in caplog.text
    assert np.all(est.values >= 0.0)


def test_run_ica_is_deterministic():
    ens, _ = square_wave_ensemble(seed=9)
    a = run_ica(ens, IcaOptions(seed=9))
    b = run_ica(ens, IcaOptions(seed=9))
    assert np.array_equal(a.unmixing_W, b.unmixing_W)
    assert np.array_equal(a.sources, b.sources)
    assert np.array_equal(a.rotation, b.rotation)
    assert a.convergence_iters == b.convergence_iters


def test_hourly_sums_oracle_and_length_check():
    assert np.array_equal(hourly_sums(np.full(N, 0.25)), np.ones(24))
    with pytest.raises(DataError, match="not a multiple of 24"):
        hourly_sums(np.ones(90))
