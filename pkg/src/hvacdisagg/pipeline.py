"""End-to-end orchestration: ingest, classify, separate, adjust, emit.

Work is split into two phases so customer-level parallelism cannot
change results: phase A (ingestion through ICA and mild statistics) is
independent per household; the multi-user base statistics are pooled
between phases; phase B (constrained adjustment) then runs against a
frozen statistics snapshot.  Every stochastic step draws from a seed
derived deterministically from the global seed and the household/day
position, so the output is identical for any worker count.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .config import PipelineConfig, write_resolved
from .errors import DataError
from .evaluation import (
    METHOD_AVERAGE,
    METHOD_FINETUNED,
    METHOD_ICA,
    EvalReport,
    benchmark_average_mild,
    evaluate_method,
    rating_from_truth,
)
from .finetune import (
    PDF_MULTI_USER,
    PDF_SINGLE_USER,
    BivariateGaussian,
    diurnal_nocturnal_energy,
    fit_hourly_bound,
    fine_tune,
    gaussian_from_energy_pairs,
    kl_bivariate_gaussian,
)
from .ica import IcaOptions, hourly_sums, run_ica, select_hvac
from .ingestion import (
    DailyLoadMatrix,
    build_day_matrix,
    build_temperature_matrix,
    day_slot_timestamps,
    load_power_csv,
    load_temperature_csv,
    load_truth_csv,
    resample_mean,
    ts_str,
)
from .preprocessing import (
    LABEL_HOT,
    LABEL_MILD,
    DayLabel,
    LiulEvent,
    build_residual_ensemble,
    classify_days,
    filter_liul_matrix,
)
from .reporting import (
    render_fig6_svg,
    render_fig8_svg,
    write_fig6_csv,
    write_fig8_csv,
    write_table1,
    write_table2,
)

log = logging.getLogger(__name__)

ESTIMATE_HEADER = [
    "timestamp", "kw_total_filtered", "kw_hvac_average", "kw_hvac_ica",
    "kw_hvac_finetuned", "kw_base_finetuned",
]


@dataclass(frozen=True)
class HouseholdPaths:
    household_id: str
    power_csv: Path
    temperature_csv: Path
    truth_csv: Path | None


def discover_corpus(corpus_dir: str | Path) -> list[HouseholdPaths]:
    """Each subdirectory holding a power.csv is one household."""
    root = Path(corpus_dir)
    if not root.is_dir():
        raise DataError(f"corpus directory not found: {root}")
    out = []
    for sub in sorted(root.iterdir()):
        if not sub.is_dir() or not (sub / "power.csv").exists():
            continue
        temp = sub / "temperature.csv"
        if not temp.exists():
            raise DataError(f"{sub.name}: power.csv present but temperature.csv missing")
        truth = sub / "hvac_truth.csv"
        out.append(HouseholdPaths(
            household_id=sub.name,
            power_csv=sub / "power.csv",
            temperature_csv=temp,
            truth_csv=truth if truth.exists() else None,
        ))
    if not out:
        raise DataError(f"no household directories with power.csv under {root}")
    return out


@dataclass
class HotDayInputs:
    """Per-hot-day intermediates produced by phase A."""

    day: date
    total_kw: np.ndarray          # (96,) LIUL-filtered
    temps_c: np.ndarray           # (24,)
    ica_kw: np.ndarray            # (96,) scaled, clipped ICA estimate
    average_kw: np.ndarray        # (96,) average-mild benchmark
    mild_columns: np.ndarray      # indices into the mild matrix
    weak_temperature_link: bool


@dataclass
class PhaseAResult:
    household_id: str
    labels: list[DayLabel]
    dropped_days: tuple
    events: list[LiulEvent]
    mild_dates: tuple[date, ...]
    mild_matrix: np.ndarray       # (96, K) LIUL-filtered mild days
    hot_days: list[HotDayInputs]
    single_user_stats: BivariateGaussian
    mild_energy_pairs: np.ndarray  # (K, 2) kWh
    gamma: tuple[float, float]


@dataclass
class HotDayResult:
    day: date
    total_kw: np.ndarray
    ica_kw: np.ndarray
    average_kw: np.ndarray
    hvac_kw: np.ndarray
    base_kw: np.ndarray
    feasible: bool
    iterations: int
    max_violation_kwh: float


@dataclass
class HouseholdRun:
    household_id: str
    labels: list[DayLabel]
    dropped_days: tuple
    events: list[LiulEvent]
    results: list[HotDayResult] = field(default_factory=list)

    @property
    def infeasible_count(self) -> int:
        return sum(1 for r in self.results if not r.feasible)


def _ica_seed(global_seed: int, h_index: int, d_index: int) -> int:
    ss = np.random.SeedSequence(global_seed, spawn_key=(1_000_000 + h_index, d_index))
    return int(ss.generate_state(1)[0])


def run_phase_a(paths: HouseholdPaths, h_index: int, cfg: PipelineConfig) -> PhaseAResult:
    with open(paths.power_csv) as fh:
        power = load_power_csv(fh)
    power = resample_mean(power, cfg.pipeline.resample_minutes)
    loads = build_day_matrix(power, cfg.pipeline.max_missing_fraction)
    with open(paths.temperature_csv) as fh:
        temp_ts = load_temperature_csv(fh)
    temps = build_temperature_matrix(temp_ts, loads.day_dates)

    labels = classify_days(loads, temps, cfg.classify)
    filtered, events = filter_liul_matrix(loads, cfg.liul)
    samples = filtered.samples

    by_label = {lab.date: lab.label for lab in labels}
    mild_idx = [j for j, d in enumerate(loads.day_dates) if by_label[d] == LABEL_MILD]
    hot_idx = [j for j, d in enumerate(loads.day_dates) if by_label[d] == LABEL_HOT]
    if not hot_idx:
        raise DataError(f"{paths.household_id}: no hot days in corpus")
    mild_dates = tuple(loads.day_dates[j] for j in mild_idx)
    mild_matrix = samples[:, mild_idx]

    hot_days: list[HotDayInputs] = []
    avg_all = benchmark_average_mild(samples[:, hot_idx], mild_matrix)
    for pos, j in enumerate(hot_idx):
        day = loads.day_dates[j]
        ensemble = build_residual_ensemble(
            samples[:, j], day, mild_matrix, mild_dates, cfg.pipeline.k_use
        )
        opts = IcaOptions(
            tol=cfg.ica.tol,
            max_iters=cfg.ica.max_iters,
            seed=_ica_seed(cfg.seed, h_index, pos),
        )
        model = run_ica(ensemble.residuals, opts)
        estimate = select_hvac(
            model, temps.temps[:, j], ensemble.residuals.mean(axis=1)
        )
        mild_cols = np.array(
            [mild_dates.index(d) for d in ensemble.mild_dates], dtype=np.intp
        )
        hot_days.append(HotDayInputs(
            day=day,
            total_kw=samples[:, j],
            temps_c=temps.temps[:, j],
            ica_kw=estimate.values,
            average_kw=avg_all[:, pos],
            mild_columns=mild_cols,
            weak_temperature_link=estimate.weak_temperature_link,
        ))

    mild_pairs = np.array([
        diurnal_nocturnal_energy(mild_matrix[:, k], cfg.finetune)
        for k in range(mild_matrix.shape[1])
    ])
    stats = gaussian_from_energy_pairs(mild_pairs)

    # Household-level bound coefficients: one quadratic fitted to the ICA
    # hourly energies of every hot day, shared by all of them.
    t_all = np.concatenate([h.temps_c for h in hot_days])
    e_all = np.concatenate([0.25 * hourly_sums(h.ica_kw) for h in hot_days])
    gamma = fit_hourly_bound(t_all, e_all)

    return PhaseAResult(
        household_id=paths.household_id,
        labels=labels,
        dropped_days=loads.dropped_days,
        events=events,
        mild_dates=mild_dates,
        mild_matrix=mild_matrix,
        hot_days=hot_days,
        single_user_stats=stats,
        mild_energy_pairs=mild_pairs,
        gamma=gamma,
    )


def run_phase_b(
    pa: PhaseAResult,
    mild_stats: BivariateGaussian,
    cfg: PipelineConfig,
    candidate_sigma: np.ndarray | None = None,
) -> list[HotDayResult]:
    results = []
    for h in pa.hot_days:
        res = fine_tune(
            total=h.total_kw,
            ica_hvac=h.ica_kw,
            mild_matrix=pa.mild_matrix[:, h.mild_columns],
            t_hours=h.temps_c,
            mild_stats=mild_stats,
            cfg=cfg.finetune,
            gamma_init=pa.gamma,
            candidate_sigma=candidate_sigma,
        )
        results.append(HotDayResult(
            day=h.day,
            total_kw=h.total_kw,
            ica_kw=h.ica_kw,
            average_kw=h.average_kw,
            hvac_kw=res.hvac_hat,
            base_kw=res.base_hat,
            feasible=res.feasible,
            iterations=res.iterations,
            max_violation_kwh=res.max_hourly_violation_kwh,
        ))
    return results


def _phase_a_task(args) -> PhaseAResult:
    paths, h_index, cfg = args
    return run_phase_a(paths, h_index, cfg)


def _phase_b_task(args) -> tuple[str, list[HotDayResult]]:
    pa, stats, cfg, cand = args
    return pa.household_id, run_phase_b(pa, stats, cfg, cand)


def _map_tasks(func, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def disaggregate_run(cfg: PipelineConfig) -> list[HouseholdRun]:
    """Full workflow over a corpus directory; returns per-household runs."""
    households = discover_corpus(cfg.corpus_dir)
    tasks = [(paths, i, cfg) for i, paths in enumerate(households)]
    phase_a = _map_tasks(_phase_a_task, tasks, cfg.workers)

    mode = cfg.finetune.pdf_mode
    pooled = None
    if mode == PDF_MULTI_USER:
        pooled = gaussian_from_energy_pairs(
            np.vstack([pa.mild_energy_pairs for pa in phase_a])
        )

    def stats_for(pa: PhaseAResult) -> BivariateGaussian:
        if mode == PDF_MULTI_USER:
            return pooled
        return pa.single_user_stats

    runs = {
        pa.household_id: HouseholdRun(
            household_id=pa.household_id,
            labels=pa.labels,
            dropped_days=pa.dropped_days,
            events=pa.events,
        )
        for pa in phase_a
    }

    candidate_by_household: dict[str, np.ndarray | None] = {
        pa.household_id: None for pa in phase_a
    }
    for outer in range(cfg.pipeline.outer_passes):
        tasks_b = [
            (pa, stats_for(pa), cfg, candidate_by_household[pa.household_id])
            for pa in phase_a
        ]
        for hid, results in _map_tasks(_phase_b_task, tasks_b, cfg.workers):
            runs[hid].results = results
        if outer + 1 >= cfg.pipeline.outer_passes:
            break
        # Next pass: candidate-side covariance from this pass's adjusted
        # base profiles (pooled for multi-user, per household otherwise).
        pairs_by_hid = {
            hid: np.array([
                diurnal_nocturnal_energy(r.base_kw, cfg.finetune)
                for r in run.results
            ])
            for hid, run in runs.items()
        }
        if mode == PDF_MULTI_USER:
            sigma = gaussian_from_energy_pairs(
                np.vstack(list(pairs_by_hid.values()))
            ).sigma
            candidate_by_household = {hid: sigma for hid in runs}
        else:
            candidate_by_household = {
                hid: gaussian_from_energy_pairs(p).sigma if len(p) >= 3 else None
                for hid, p in pairs_by_hid.items()
            }
    ordered = [runs[paths.household_id] for paths in households]
    n_infeasible = sum(r.infeasible_count for r in ordered)
    if n_infeasible:
        log.warning("%d hot day(s) ended infeasible", n_infeasible)
    return ordered


def write_run_outputs(cfg: PipelineConfig, runs: list[HouseholdRun]) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out / "resolved_config.yaml")

    with open(out / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["household", "date", "label", "reasons"])
        for run in runs:
            for lab in run.labels:
                writer.writerow([
                    run.household_id, lab.date.isoformat(), lab.label,
                    ";".join(lab.reasons),
                ])

    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "household", "date", "feasible", "iterations", "max_violation_kwh",
        ])
        for run in runs:
            for r in run.results:
                writer.writerow([
                    run.household_id, r.day.isoformat(), int(r.feasible),
                    r.iterations, f"{r.max_violation_kwh:.6f}",
                ])

    with open(out / "events.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "household", "date", "start_slot", "end_slot", "magnitude_kw", "hint",
        ])
        for run in runs:
            for ev in run.events:
                writer.writerow([
                    run.household_id,
                    ev.date.isoformat() if ev.date else "",
                    ev.start_index, ev.end_index,
                    f"{ev.magnitude_kw:.6f}", ev.appliance_hint,
                ])

    for run in runs:
        hdir = out / "households" / run.household_id
        hdir.mkdir(parents=True, exist_ok=True)
        with open(hdir / "estimates.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(ESTIMATE_HEADER)
            for r in run.results:
                stamps = day_slot_timestamps(r.day)
                for i in range(len(stamps)):
                    writer.writerow([
                        ts_str(stamps[i]),
                        f"{r.total_kw[i]:.6f}",
                        f"{r.average_kw[i]:.6f}",
                        f"{r.ica_kw[i]:.6f}",
                        f"{r.hvac_kw[i]:.6f}",
                        f"{r.base_kw[i]:.6f}",
                    ])
    return out


def _read_estimates(path: Path) -> tuple[list[date], dict[str, np.ndarray]]:
    """Parse an estimates.csv back into per-day-stacked column arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ESTIMATE_HEADER:
            raise DataError(f"{path}: unexpected header {header!r}")
        rows = list(reader)
    if not rows or len(rows) % 96 != 0:
        raise DataError(f"{path}: expected whole 96-slot days, got {len(rows)} rows")
    days = []
    for start in range(0, len(rows), 96):
        days.append(date.fromisoformat(rows[start][0][:10]))
    cols = {name: np.array([float(r[i]) for r in rows]).reshape(-1, 96).T
            for i, name in enumerate(ESTIMATE_HEADER) if name != "timestamp"}
    return days, cols


def _truth_matrix(
    paths: HouseholdPaths, days: list[date]
) -> tuple[np.ndarray, np.ndarray]:
    if paths.truth_csv is None:
        raise DataError(f"missing ground-truth CSV for {paths.household_id}")
    with open(paths.truth_csv) as fh:
        truth_ts = load_truth_csv(fh)
    truth = build_day_matrix(resample_mean(truth_ts))
    try:
        idx = [truth.day_dates.index(d) for d in days]
    except ValueError as exc:
        raise DataError(f"{paths.household_id}: truth missing a hot day: {exc}") from None
    return truth.samples[:, idx], truth.samples


def evaluate_run(cfg: PipelineConfig) -> dict:
    """Compute metrics for the three methods and write the report CSVs."""
    out = Path(cfg.out_dir)
    households = discover_corpus(cfg.corpus_dir)
    by_id = {p.household_id: p for p in households}

    methods = (METHOD_AVERAGE, METHOD_ICA, METHOD_FINETUNED)
    col_of = {
        METHOD_AVERAGE: "kw_hvac_average",
        METHOD_ICA: "kw_hvac_ica",
        METHOD_FINETUNED: "kw_hvac_finetuned",
    }
    est: dict[str, dict[str, np.ndarray]] = {m: {} for m in methods}
    truth_hot: dict[str, np.ndarray] = {}
    ratings: dict[str, float] = {}
    base_pairs: dict[str, list] = {"actual": [], METHOD_ICA: [], METHOD_FINETUNED: []}

    est_files = sorted((out / "households").glob("*/estimates.csv"))
    if not est_files:
        raise DataError(f"no disaggregation outputs under {out}")
    for est_path in est_files:
        hid = est_path.parent.name
        if hid not in by_id:
            raise DataError(f"estimates for unknown household {hid}")
        days, cols = _read_estimates(est_path)
        hot_truth, all_truth = _truth_matrix(by_id[hid], days)
        truth_hot[hid] = hot_truth
        if cfg.evaluation.nameplate_rating_kw is not None:
            ratings[hid] = cfg.evaluation.nameplate_rating_kw
        else:
            ratings[hid] = rating_from_truth(all_truth, cfg.evaluation.rating_percentile)
        for m in methods:
            est[m][hid] = cols[col_of[m]]
        with open(by_id[hid].power_csv) as fh:
            raw = build_day_matrix(resample_mean(load_power_csv(fh)))
        idx = [raw.day_dates.index(d) for d in days]
        for j in range(len(days)):
            actual_base = raw.samples[:, idx[j]] - hot_truth[:, j]
            ica_base = np.maximum(
                0.0, cols["kw_total_filtered"][:, j] - cols["kw_hvac_ica"][:, j]
            )
            base_pairs["actual"].append(
                diurnal_nocturnal_energy(np.maximum(actual_base, 0.0), cfg.finetune)
            )
            base_pairs[METHOD_ICA].append(
                diurnal_nocturnal_energy(ica_base, cfg.finetune)
            )
            base_pairs[METHOD_FINETUNED].append(
                diurnal_nocturnal_energy(cols["kw_base_finetuned"][:, j], cfg.finetune)
            )

    reports = [
        evaluate_method(m, est[m], truth_hot, ratings) for m in methods
    ]
    write_table1(out / "table1.csv", reports)

    actual_g = gaussian_from_energy_pairs(np.array(base_pairs["actual"]))
    table2_rows = [("actual", actual_g, None)]
    for m in (METHOD_ICA, METHOD_FINETUNED):
        g = gaussian_from_energy_pairs(np.array(base_pairs[m]))
        table2_rows.append((m, g, kl_bivariate_gaussian(g, actual_g)))
    write_table2(out / "table2.csv", table2_rows)
    write_fig6_csv(out / "fig6_hourly.csv", reports)
    write_fig8_csv(out / "fig8_hist.csv", reports)
    return {"reports": reports, "table2": table2_rows, "out_dir": out}


def render_figures(cfg: PipelineConfig, reports: list[EvalReport]) -> list[Path]:
    out = Path(cfg.out_dir)
    fig6 = out / "fig6_hourly.svg"
    fig8 = out / "fig8_hist.svg"
    render_fig6_svg(fig6, reports)
    render_fig8_svg(fig8, reports)
    return [fig6, fig8]
