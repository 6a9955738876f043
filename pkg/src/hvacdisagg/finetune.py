"""Constrained post-adjustment of the ICA HVAC estimate.

The separated HVAC profile and the mild-day base model are jointly
re-fit so that their sum tracks the metered total, subject to three
structural guards: hourly HVAC energy must stay within a margin of a
quadratic-in-temperature bound, both profiles must stay inside
[0, total] at every slot, and (optionally) the base load's
diurnal/nocturnal energy pair is pulled toward the mild-day bivariate
Gaussian via a KL term.

The solver is projected gradient descent with backtracking: box
constraints are enforced exactly by clamping the assembled profiles and
folding the correction into the adjustment vectors; the hourly energy
band is handled by a quadratic penalty whose weight doubles while
violated.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, SolverError

log = logging.getLogger(__name__)

PDF_OFF = "off"
PDF_SINGLE_USER = "single_user"
PDF_MULTI_USER = "multi_user"
PDF_MODES = (PDF_OFF, PDF_SINGLE_USER, PDF_MULTI_USER)

KL_PENALIZE = "penalize"
#: Flip the KL term's sign so divergence from the mild-day statistics is
#: rewarded instead of penalized; kept for experimentation, not the default.
KL_REWARD = "reward"
KL_SIGNS = (KL_PENALIZE, KL_REWARD)

#: Slack added to the hourly-band margin when judging feasibility.
FEAS_TOL = 1e-6


@dataclass(frozen=True)
class SolverParams:
    max_iters: int = 2000
    step: float = 1e-3
    tol: float = 1e-7
    penalty_init: float = 10.0
    penalty_double_every: int = 50
    penalty_cap: float = 1e10
    min_step: float = 1e-12


@dataclass(frozen=True)
class FineTuneConfig:
    lambda1: float = 0.1
    lambda2: float = 0.1
    lambda3: float = 1.0
    epsilon_kwh: float = 0.25
    pdf_mode: str = PDF_MULTI_USER
    kl_sign: str = KL_PENALIZE
    diurnal_window: tuple[int, int] = (36, 68)    # 09:00-17:00
    nocturnal_window: tuple[int, int] = (0, 20)   # 00:00-05:00
    solver: SolverParams = field(default_factory=SolverParams)

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigError("lambda weights must be nonnegative")
        if self.epsilon_kwh <= 0:
            raise ConfigError("epsilon_kwh must be > 0")
        if self.pdf_mode not in PDF_MODES:
            raise ConfigError(f"pdf_mode must be one of {PDF_MODES}")
        if self.kl_sign not in KL_SIGNS:
            raise ConfigError(f"kl_sign must be one of {KL_SIGNS}")
        for name, (lo, hi) in (("diurnal", self.diurnal_window),
                               ("nocturnal", self.nocturnal_window)):
            if not 0 <= lo < hi:
                raise ConfigError(f"{name} window [{lo}, {hi}) is empty or invalid")
        a, b = sorted([self.diurnal_window, self.nocturnal_window])
        if a[1] > b[0]:
            raise ConfigError("diurnal and nocturnal windows overlap")


@dataclass(frozen=True)
class BivariateGaussian:
    """Gaussian over (diurnal, nocturnal) daily base energy in kWh."""

    mu: np.ndarray       # (2,)
    sigma: np.ndarray    # (2, 2) symmetric positive definite

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if mu.shape != (2,) or sigma.shape != (2, 2):
            raise DataError("BivariateGaussian needs mu (2,) and sigma (2, 2)")
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise DataError("covariance must be symmetric")
        if np.linalg.eigvalsh(sigma).min() <= 1e-9:
            raise DataError("covariance must be positive definite (eigenvalues > 1e-9)")


@dataclass
class FineTuneVars:
    """Free variables of the adjustment program."""

    alpha: float
    beta: np.ndarray       # (K,)
    theta_h: np.ndarray    # (N,)
    theta_b: np.ndarray    # (N,)
    gamma1: float
    gamma2: float


@dataclass
class DisaggregationResult:
    """Adjusted profiles and solve diagnostics for one hot day."""

    hvac_hat: np.ndarray             # (N,) kW
    base_hat: np.ndarray             # (N,) kW
    hourly_hvac_bound: np.ndarray    # (24,) kWh
    objective_trace: np.ndarray
    feasible: bool
    iterations: int = 0
    max_hourly_violation_kwh: float = 0.0
    #: Trace indices where the penalty weight changed (objective re-based).
    stage_starts: tuple[int, ...] = (0,)
    vars: FineTuneVars | None = None


def _window_slice(window: tuple[int, int], n: int) -> slice:
    lo, hi = window
    if hi > n:
        raise DataError(f"window [{lo}, {hi}) exceeds profile length {n}")
    return slice(lo, hi)


def diurnal_nocturnal_energy(
    profile: np.ndarray, cfg: FineTuneConfig = FineTuneConfig()
) -> tuple[float, float]:
    """Daytime and overnight energy (kWh) of a 15-minute kW profile."""
    p = np.asarray(profile, dtype=np.float64)
    e_di = 0.25 * float(p[_window_slice(cfg.diurnal_window, len(p))].sum())
    e_noc = 0.25 * float(p[_window_slice(cfg.nocturnal_window, len(p))].sum())
    return e_di, e_noc


def _det2(m: np.ndarray) -> float:
    return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


def _inv2(m: np.ndarray) -> np.ndarray:
    det = _det2(m)
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def kl_bivariate_gaussian(p: BivariateGaussian, q: BivariateGaussian) -> float:
    """Closed-form KL divergence D(p || q) between bivariate Gaussians."""
    q_inv = _inv2(q.sigma)
    d = q.mu - p.mu
    val = 0.5 * (
        float(np.trace(q_inv @ p.sigma))
        + float(d @ q_inv @ d)
        - 2.0
        + math.log(_det2(q.sigma) / _det2(p.sigma))
    )
    # Exact zero for identical inputs despite rounding in the trace/log.
    return max(0.0, val)


def gaussian_from_energy_pairs(pairs: np.ndarray) -> BivariateGaussian:
    """Sample mean/covariance (ddof=1) of (diurnal, nocturnal) kWh pairs.

    A near-singular covariance is regularized by +1e-6*I so the Gaussian
    stays usable even for identical days.
    """
    pairs = np.asarray(pairs, dtype=np.float64)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] < 3:
        raise DataError("need at least 3 (diurnal, nocturnal) pairs")
    mu = pairs.mean(axis=0)
    sigma = np.cov(pairs.T, ddof=1)
    if np.linalg.eigvalsh(sigma).min() < 1e-9:
        sigma = sigma + 1e-6 * np.eye(2)
    return BivariateGaussian(mu, sigma)


def estimate_base_stats(
    base_profiles: np.ndarray, cfg: FineTuneConfig = FineTuneConfig()
) -> BivariateGaussian:
    """Fit the (diurnal, nocturnal) energy Gaussian over a set of days."""
    profiles = np.asarray(base_profiles, dtype=np.float64)
    if profiles.ndim != 2 or profiles.shape[1] < 3:
        raise DataError("need at least 3 day columns to estimate base statistics")
    energies = np.array([
        diurnal_nocturnal_energy(profiles[:, j], cfg) for j in range(profiles.shape[1])
    ])
    return gaussian_from_energy_pairs(energies)


def hourly_bound_model(t_hours: np.ndarray, gamma1: float, gamma2: float) -> np.ndarray:
    """Quadratic-in-temperature hourly HVAC energy bound, floored at zero."""
    t = np.asarray(t_hours, dtype=np.float64)
    return np.clip(gamma1 * t + gamma2 * t * t, 0.0, None)


def fit_hourly_bound(t_hours: np.ndarray, hourly_kwh: np.ndarray) -> tuple[float, float]:
    """Least-squares (gamma1, gamma2) for hourly energy against (T, T^2)."""
    t = np.asarray(t_hours, dtype=np.float64)
    basis = np.column_stack([t, t * t])
    coef, *_ = np.linalg.lstsq(basis, np.asarray(hourly_kwh, dtype=np.float64), rcond=None)
    return float(coef[0]), float(coef[1])


def _hourly_kwh(profile: np.ndarray) -> np.ndarray:
    return 0.25 * profile.reshape(24, -1).sum(axis=1)


class _Objective:
    """Penalized objective with analytic gradients over the packed vector.

    Packing: [alpha, beta (K), theta_h (N), theta_b (N), gamma1, gamma2].
    The smooth part (shape loss, ridge terms, KL through the base-energy
    windows) and the hourly-band penalty are kept separate so the smooth
    gradient can be verified against finite differences on its own.
    """

    def __init__(
        self,
        total: np.ndarray,
        ica_hvac: np.ndarray,
        mild_matrix: np.ndarray,
        t_hours: np.ndarray,
        mild_stats: BivariateGaussian,
        cfg: FineTuneConfig,
        candidate_sigma: np.ndarray,
    ):
        self.total = total
        self.ica = ica_hvac
        self.mild = mild_matrix
        self.t = t_hours
        self.cfg = cfg
        self.n, self.k = mild_matrix.shape
        self.sl_di = _window_slice(cfg.diurnal_window, self.n)
        self.sl_noc = _window_slice(cfg.nocturnal_window, self.n)
        self.use_kl = cfg.pdf_mode != PDF_OFF and cfg.lambda3 > 0
        self.kl_coeff = cfg.lambda3 if cfg.kl_sign == KL_PENALIZE else -cfg.lambda3
        self.mu_q = mild_stats.mu
        self.q_inv = _inv2(mild_stats.sigma)
        # Candidate-side covariance is held fixed during the solve, so the
        # trace and log-det KL pieces are a constant offset.
        self.kl_const = 0.5 * (
            float(np.trace(self.q_inv @ candidate_sigma))
            - 2.0
            + math.log(_det2(mild_stats.sigma) / _det2(candidate_sigma))
        )

    # --- packing -----------------------------------------------------
    def pack(self, v: FineTuneVars) -> np.ndarray:
        return np.concatenate([
            [v.alpha], v.beta, v.theta_h, v.theta_b, [v.gamma1, v.gamma2]
        ])

    def unpack(self, x: np.ndarray) -> FineTuneVars:
        k, n = self.k, self.n
        return FineTuneVars(
            alpha=float(x[0]),
            beta=x[1 : 1 + k],
            theta_h=x[1 + k : 1 + k + n],
            theta_b=x[1 + k + n : 1 + k + 2 * n],
            gamma1=float(x[-2]),
            gamma2=float(x[-1]),
        )

    def profiles(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        v = self.unpack(x)
        hvac = v.alpha * self.ica + v.theta_h
        base = self.mild @ v.beta + v.theta_b
        return hvac, base

    # --- smooth part ---------------------------------------------------
    def smooth_value(self, x: np.ndarray) -> float:
        v = self.unpack(x)
        hvac, base = self.profiles(x)
        r = self.total - hvac - base
        val = float(r @ r)
        val += self.cfg.lambda1 * float(v.theta_h @ v.theta_h)
        val += self.cfg.lambda2 * float(v.theta_b @ v.theta_b)
        if self.use_kl:
            mu_p = np.array([
                0.25 * base[self.sl_di].sum(), 0.25 * base[self.sl_noc].sum()
            ])
            d = self.mu_q - mu_p
            kl = self.kl_const + 0.5 * float(d @ self.q_inv @ d)
            val += self.kl_coeff * kl
        return val

    def smooth_grad(self, x: np.ndarray) -> np.ndarray:
        v = self.unpack(x)
        hvac, base = self.profiles(x)
        r = self.total - hvac - base
        g_alpha = -2.0 * float(r @ self.ica)
        g_beta = -2.0 * (self.mild.T @ r)
        g_th = -2.0 * r + 2.0 * self.cfg.lambda1 * v.theta_h
        g_tb = -2.0 * r + 2.0 * self.cfg.lambda2 * v.theta_b
        if self.use_kl:
            mu_p = np.array([
                0.25 * base[self.sl_di].sum(), 0.25 * base[self.sl_noc].sum()
            ])
            qd = self.q_inv @ (self.mu_q - mu_p)
            w = np.zeros(self.n)
            w[self.sl_di] = -0.25 * qd[0]
            w[self.sl_noc] = -0.25 * qd[1]
            w *= self.kl_coeff
            g_tb += w
            g_beta += self.mild.T @ w
        return np.concatenate([[g_alpha], g_beta, g_th, g_tb, [0.0, 0.0]])

    # --- hourly band penalty -------------------------------------------
    def band_residuals(self, x: np.ndarray) -> np.ndarray:
        v = self.unpack(x)
        hvac, _ = self.profiles(x)
        bound = hourly_bound_model(self.t, v.gamma1, v.gamma2)
        return _hourly_kwh(hvac) - bound

    def penalty_value(self, x: np.ndarray, weight: float) -> float:
        h = self.band_residuals(x)
        excess = np.maximum(0.0, np.abs(h) - self.cfg.epsilon_kwh)
        return weight * float(excess @ excess)

    def penalty_grad(self, x: np.ndarray, weight: float) -> np.ndarray:
        v = self.unpack(x)
        h = self.band_residuals(x)
        excess = np.maximum(0.0, np.abs(h) - self.cfg.epsilon_kwh)
        c = weight * 2.0 * excess * np.sign(h)            # (24,)
        u = np.repeat(c, self.n // 24) * 0.25             # d/d hvac_i
        g_alpha = float(u @ self.ica)
        g_th = u
        raw = v.gamma1 * self.t + v.gamma2 * self.t * self.t
        active = (raw > 0).astype(np.float64)
        g_g1 = float(-(c * active) @ self.t)
        g_g2 = float(-(c * active) @ (self.t * self.t))
        return np.concatenate([
            [g_alpha], np.zeros(self.k), g_th, np.zeros(self.n), [g_g1, g_g2]
        ])

    def value(self, x: np.ndarray, weight: float) -> float:
        return self.smooth_value(x) + self.penalty_value(x, weight)

    def grad(self, x: np.ndarray, weight: float) -> np.ndarray:
        return self.smooth_grad(x) + self.penalty_grad(x, weight)

    def diag_curvature(self, x: np.ndarray, weight: float) -> np.ndarray:
        """Approximate diagonal Hessian used to precondition the step.

        The blocks live on wildly different scales (gamma2 couples to T^4,
        theta to O(1)); without this the common backtracked step crawls.
        Penalty curvature is charged only to hours currently outside the
        band, so the huge late-stage weights do not freeze the rest.
        """
        act = (np.abs(self.band_residuals(x)) > self.cfg.epsilon_kwh).astype(np.float64)
        hi = 0.25 * self.ica.reshape(24, -1).sum(axis=1)
        p_alpha = 2.0 * float(self.ica @ self.ica) + 2.0 * weight * float((act * hi) @ hi)
        p_beta = 2.0 * np.einsum("ij,ij->j", self.mild, self.mild)
        p_th = 2.0 + 2.0 * self.cfg.lambda1 + 0.125 * weight * np.repeat(act, self.n // 24)
        kl_diag = 0.0
        if self.use_kl:
            kl_diag = abs(self.kl_coeff) * 0.0625 * float(np.abs(self.q_inv).max())
        p_tb = np.full(self.n, 2.0 + 2.0 * self.cfg.lambda2 + kl_diag)
        t2 = self.t * self.t
        p_g1 = 2.0 * weight * float((act * self.t) @ self.t)
        p_g2 = 2.0 * weight * float((act * t2) @ t2)
        diag = np.concatenate([[p_alpha], p_beta, p_th, p_tb, [p_g1, p_g2]])
        return np.maximum(diag, 1e-9)

    # --- projection ------------------------------------------------------
    def project(self, x: np.ndarray) -> np.ndarray:
        """Clamp profiles into [0, total], folding corrections into thetas."""
        v = self.unpack(x)
        alpha = max(0.0, v.alpha)
        beta = np.maximum(0.0, v.beta)
        hvac = np.clip(alpha * self.ica + v.theta_h, 0.0, self.total)
        base = np.clip(self.mild @ beta + v.theta_b, 0.0, self.total)
        theta_h = hvac - alpha * self.ica
        theta_b = base - self.mild @ beta
        return np.concatenate([[alpha], beta, theta_h, theta_b, [v.gamma1, v.gamma2]])


def _restore_band(obj: _Objective, x: np.ndarray, eps: float) -> np.ndarray:
    """Shift hourly HVAC energy the last bit into the band, box permitting.

    The penalty drives the band residual to a small positive excess that
    shrinks with the weight but never exactly reaches zero; this exact
    per-hour correction removes that slack where the [0, total] box
    leaves room, folding the change into theta_h.
    """
    v = obj.unpack(x)
    hvac, _ = obj.profiles(x)
    per_hour = obj.n // 24
    bound = hourly_bound_model(obj.t, v.gamma1, v.gamma2)
    h = _hourly_kwh(hvac) - bound
    changed = False
    for k in np.nonzero(np.abs(h) > eps)[0]:
        sl = slice(k * per_hour, (k + 1) * per_hour)
        seg = hvac[sl]
        need_kw = (abs(h[k]) - eps + 1e-9) / 0.25    # kW-slots to move
        avail = seg.copy() if h[k] > 0 else obj.total[sl] - seg
        room = float(avail.sum())
        if room < need_kw:
            continue
        delta = need_kw * avail / room
        # Clamp away float overshoot so the box stays exactly satisfied.
        if h[k] > 0:
            hvac[sl] = np.maximum(seg - delta, 0.0)
        else:
            hvac[sl] = np.minimum(seg + delta, obj.total[sl])
        changed = True
    if not changed:
        return x
    theta_h = hvac - v.alpha * obj.ica
    return np.concatenate([
        [v.alpha], v.beta, theta_h, v.theta_b, [v.gamma1, v.gamma2]
    ])


def fine_tune(
    total: np.ndarray,
    ica_hvac: np.ndarray,
    mild_matrix: np.ndarray,
    t_hours: np.ndarray,
    mild_stats: BivariateGaussian,
    cfg: FineTuneConfig = FineTuneConfig(),
    gamma_init: tuple[float, float] | None = None,
    candidate_sigma: np.ndarray | None = None,
) -> DisaggregationResult:
    """Run the constrained adjustment for one hot day.

    `candidate_sigma` is the covariance of the candidate-side base-energy
    Gaussian (the running across-day estimate on later passes); on a first
    pass it defaults to the mild-day covariance, leaving only the mean
    displacement active in the KL term.
    """
    total = np.asarray(total, dtype=np.float64)
    ica_hvac = np.asarray(ica_hvac, dtype=np.float64)
    mild_matrix = np.asarray(mild_matrix, dtype=np.float64)
    t_hours = np.asarray(t_hours, dtype=np.float64)
    n = len(total)
    if n % 24 != 0 or mild_matrix.shape[0] != n or len(ica_hvac) != n:
        raise DataError("total, ICA estimate, and mild matrix must share a 96-slot grid")
    if len(t_hours) != 24:
        raise DataError("temperature vector must have 24 hourly values")
    if candidate_sigma is None:
        candidate_sigma = mild_stats.sigma
    obj = _Objective(total, ica_hvac, mild_matrix, t_hours, mild_stats, cfg,
                     np.asarray(candidate_sigma, dtype=np.float64))
    solver = cfg.solver

    k = mild_matrix.shape[1]
    if gamma_init is None:
        gamma_init = fit_hourly_bound(t_hours, _hourly_kwh(ica_hvac))
    x = obj.pack(FineTuneVars(
        alpha=1.0,
        beta=np.full(k, 1.0 / k),
        theta_h=np.zeros(n),
        theta_b=np.zeros(n),
        gamma1=gamma_init[0],
        gamma2=gamma_init[1],
    ))
    x = obj.project(x)

    weight = solver.penalty_init
    f_cur = obj.value(x, weight)
    if not math.isfinite(f_cur):
        raise SolverError("non-finite objective at iteration 0")
    trace = [f_cur]
    stage_starts = [0]
    step = solver.step
    eps = cfg.epsilon_kwh

    def escalate() -> bool:
        nonlocal weight, f_cur
        viol = float(np.abs(obj.band_residuals(x)).max()) - eps
        if viol > FEAS_TOL and weight < solver.penalty_cap:
            weight *= 2.0
            f_cur = obj.value(x, weight)
            stage_starts.append(len(trace))
            trace.append(f_cur)
            return True
        return False

    it = 0
    while it < solver.max_iters:
        it += 1
        g = obj.grad(x, weight) / obj.diag_curvature(x, weight)
        s = step
        accepted = False
        while s >= solver.min_step:
            cand = obj.project(x - s * g)
            f_new = obj.value(cand, weight)
            if not math.isfinite(f_new):
                raise SolverError(f"non-finite objective at iteration {it}")
            if f_new <= f_cur:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            if escalate():
                continue
            break
        rel_change = abs(f_cur - f_new) / max(1.0, abs(f_cur))
        x, f_cur = cand, f_new
        trace.append(f_cur)
        step = min(s * 2.0, 1.0)
        if rel_change < solver.tol:
            if escalate():
                continue
            break
        if it % solver.penalty_double_every == 0:
            escalate()

    x = _restore_band(obj, x, eps)
    hvac, base = obj.profiles(x)
    # project() kept both profiles inside the box, but folding the clamp into
    # theta and re-adding is not exact in floats; snap the one-ulp overshoot.
    hvac = np.clip(hvac, 0.0, total)
    base = np.clip(base, 0.0, total)
    v = obj.unpack(x)
    bound = hourly_bound_model(t_hours, v.gamma1, v.gamma2)
    max_viol = float(np.abs(_hourly_kwh(hvac) - bound).max())
    feasible = max_viol <= eps + FEAS_TOL
    if not feasible:
        log.info("hourly band violated by %.4f kWh at termination", max_viol - eps)
    return DisaggregationResult(
        hvac_hat=hvac,
        base_hat=base,
        hourly_hvac_bound=bound,
        objective_trace=np.array(trace),
        feasible=feasible,
        iterations=it,
        max_hourly_violation_kwh=max_viol,
        stage_starts=tuple(stage_starts),
        vars=FineTuneVars(v.alpha, v.beta.copy(), v.theta_h.copy(),
                          v.theta_b.copy(), v.gamma1, v.gamma2),
    )
