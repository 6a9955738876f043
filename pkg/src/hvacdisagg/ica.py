"""Blind separation of the HVAC component from residual ensembles.

The residual ensemble mixes two latent profiles (the HVAC cycle and a
random remainder) into K observed columns.  Centering plus a rank-2 PCA
whitening brings the ensemble to identity covariance; a symmetric
fixed-point iteration with a log-cosh contrast then finds the rotation
that maximizes non-Gaussianity.  Selection, sign, and scale ambiguities
are resolved against the day's temperature curve and the ensemble mean.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

N_COMPONENTS = 2


@dataclass(frozen=True)
class IcaOptions:
    tol: float = 1e-6
    max_iters: int = 500
    seed: int = 0


@dataclass(frozen=True)
class WhiteningModel:
    """Rank-2 PCA whitening fitted to one residual ensemble."""

    mean_vector: np.ndarray         # (K,) column means
    whitening_matrix: np.ndarray    # (2, K): whitened = centered @ whitening_matrix.T
    dewhitening_matrix: np.ndarray  # (K, 2): centered ~ whitened @ dewhitening_matrix.T


@dataclass
class IcaModel:
    """Fitted unmixing for one ensemble.

    Sources are defined on the column-centered residuals (the whitening
    model keeps the removed means), applied on the right as in
    `sources = centered @ unmixing_W`.
    """

    unmixing_W: np.ndarray          # (K, 2)
    mixing_A_hat: np.ndarray        # (2, K): sources @ mixing_A_hat ~ rank-2 centered part
    sources: np.ndarray             # (N, 2)
    rotation: np.ndarray            # (2, 2) orthogonal, rows orthonormal
    hvac_component_index: int
    convergence_iters: int
    converged: bool
    whitening: WhiteningModel


@dataclass(frozen=True)
class HvacIcaEstimate:
    """Selected, sign-fixed, rescaled HVAC profile for one hot day."""

    values: np.ndarray              # (N,) kW, >= 0
    component_index: int
    temperature_correlation: float
    scale: float
    weak_temperature_link: bool


def center_and_whiten(residuals: np.ndarray) -> tuple[np.ndarray, WhiteningModel]:
    """Project a residual ensemble onto its top-2 unit-variance directions."""
    x = np.asarray(residuals, dtype=np.float64)
    n, k = x.shape
    if k < 3:
        raise DataError(f"residual ensemble needs >= 3 columns, got {k}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    scale = max(eigvals[0], 1e-30)
    if eigvals[1] <= 1e-12 * scale:
        raise DataError("insufficient ensemble rank")
    top_vals = eigvals[:N_COMPONENTS]
    top_vecs = eigvecs[:, :N_COMPONENTS]
    # Fix eigenvector signs so results are reproducible across BLAS builds.
    flips = np.where(top_vecs[np.abs(top_vecs).argmax(axis=0), range(N_COMPONENTS)] < 0, -1.0, 1.0)
    top_vecs = top_vecs * flips
    whitening = (top_vecs / np.sqrt(top_vals)).T           # (2, K)
    dewhitening = top_vecs * np.sqrt(top_vals)             # (K, 2)
    whitened = centered @ whitening.T
    return whitened, WhiteningModel(mean, whitening, dewhitening)


def _random_orthogonal_2x2(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((2, 2)))
    return q * np.sign(np.diag(r))


def _symmetric_decorrelate(w: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(w @ w.T)
    return vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T @ w


def fastica_2comp(
    whitened: np.ndarray,
    whitening: WhiteningModel,
    opts: IcaOptions = IcaOptions(),
) -> IcaModel:
    """Symmetric fixed-point iteration with the log-cosh contrast.

    Stops once the rotation update drops below `opts.tol`; running out of
    iterations is flagged via `converged`, not raised, since a pair of
    near-Gaussian sources is genuinely unidentifiable.  With
    `max_iters=0` the seeded initial rotation is returned as-is.
    """
    z = np.asarray(whitened, dtype=np.float64).T           # (2, N)
    n = z.shape[1]
    rng = np.random.default_rng(opts.seed)
    w = _random_orthogonal_2x2(rng)

    converged = False
    iters = 0
    while iters < opts.max_iters:
        iters += 1
        u = w @ z                                          # (2, N)
        g = np.tanh(u)
        g_prime = 1.0 - g * g
        w_new = (g @ z.T) / n - np.diag(g_prime.mean(axis=1)) @ w
        w_new = _symmetric_decorrelate(w_new)
        delta = np.max(np.abs(np.abs(np.sum(w_new * w, axis=1)) - 1.0))
        w = w_new
        if delta < opts.tol:
            converged = True
            break

    unmixing = whitening.whitening_matrix.T @ w.T          # (K, 2)
    mixing = w @ whitening.dewhitening_matrix.T            # (2, K)
    sources = np.asarray(whitened) @ w.T                   # (N, 2)
    return IcaModel(
        unmixing_W=unmixing,
        mixing_A_hat=mixing,
        sources=sources,
        rotation=w,
        hvac_component_index=0,
        convergence_iters=iters,
        converged=converged,
        whitening=whitening,
    )


def run_ica(residuals: np.ndarray, opts: IcaOptions = IcaOptions()) -> IcaModel:
    """Whiten an ensemble and fit the 2-component unmixing in one call."""
    whitened, wm = center_and_whiten(residuals)
    return fastica_2comp(whitened, wm, opts)


def hourly_sums(profile: np.ndarray) -> np.ndarray:
    """Sum an N-slot daily profile into 24 hourly values."""
    n = len(profile)
    if n % 24 != 0:
        raise DataError(f"profile length {n} is not a multiple of 24")
    return profile.reshape(24, n // 24).sum(axis=1)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0:
        return 0.0
    return float(a @ b / denom)


def select_hvac(
    model: IcaModel, hot_temps: np.ndarray, residual_mean: np.ndarray
) -> HvacIcaEstimate:
    """Pick, orient, and rescale the HVAC source.

    The source whose hourly energy tracks temperature more strongly is the
    HVAC candidate; its sign is fixed to correlate positively with
    temperature, its amplitude recovered by a nonnegative least-squares
    fit against the ensemble-mean residual, and the result clipped at
    zero.

    The fit uses the rectified source: the centered waveform's negative
    lobe carries no load, and fitting it too would shrink the recovered
    amplitude by roughly one minus the duty cycle.
    """
    temps = np.asarray(hot_temps, dtype=np.float64)
    corr = np.array([
        _pearson(hourly_sums(model.sources[:, c]), temps) for c in range(N_COMPONENTS)
    ])
    idx = int(np.argmax(np.abs(corr)))
    weak = bool(np.all(np.abs(corr) < 0.1))
    if weak:
        log.warning(
            "weak temperature linkage: |corr| = %.3f / %.3f", abs(corr[0]), abs(corr[1])
        )
    sign = 1.0 if corr[idx] >= 0 else -1.0
    source = model.sources[:, idx] * sign

    target = np.asarray(residual_mean, dtype=np.float64)
    rect = np.maximum(source, 0.0)
    denom = float(rect @ rect)
    scale = max(0.0, float(rect @ target) / denom) if denom > 0 else 0.0
    values = scale * rect

    model.hvac_component_index = idx
    return HvacIcaEstimate(
        values=values,
        component_index=idx,
        temperature_correlation=float(corr[idx]),
        scale=scale,
        weak_temperature_link=weak,
    )
