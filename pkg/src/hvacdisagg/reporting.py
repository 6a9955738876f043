"""Report emission: summary tables as CSV and figures as static SVG.

All artifacts are deterministic: floats are formatted with fixed
precision, matplotlib's hash salt is pinned, and no timestamps are
embedded, so a rerun with the same inputs is byte-identical.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import EvalReport, nmae_histogram  # noqa: E402
from .finetune import BivariateGaussian  # noqa: E402

SVG_HASHSALT = "hvacdisagg"
_NO_DATE = {"Date": None}


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_table1(path: str | Path, reports: list[EvalReport]) -> None:
    """Method comparison: mean/std nMAE and mean nEE per method."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "nmae_mean_pct", "nmae_std_pct", "nee_mean_pct"])
        for rep in reports:
            writer.writerow([
                rep.method, _fmt(rep.nmae_mean), _fmt(rep.nmae_std), _fmt(rep.nee_mean),
            ])


def write_table2(
    path: str | Path,
    rows: list[tuple[str, BivariateGaussian, float | None]],
) -> None:
    """Base-energy Gaussians (diurnal, nocturnal) per method, with KL to actual."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "method", "mu_diurnal_kwh", "mu_nocturnal_kwh",
            "sigma_dd", "sigma_dn", "sigma_nn", "kl_to_actual",
        ])
        for method, g, kl in rows:
            writer.writerow([
                method, _fmt(g.mu[0]), _fmt(g.mu[1]),
                _fmt(g.sigma[0, 0]), _fmt(g.sigma[0, 1]), _fmt(g.sigma[1, 1]),
                "" if kl is None else _fmt(kl),
            ])


def write_fig6_csv(path: str | Path, reports: list[EvalReport]) -> None:
    """Hourly error quartiles per method (fraction of rating)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "hour", "min", "q1", "median", "q3", "max"])
        for rep in reports:
            for hour in range(24):
                writer.writerow(
                    [rep.method, hour] + [_fmt(v) for v in rep.hourly_quartiles[hour]]
                )


def write_fig8_csv(path: str | Path, reports: list[EvalReport]) -> None:
    """Histogram of per-customer nMAE fractions per method."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "bin_lo", "bin_hi", "count"])
        for rep in reports:
            counts, edges = nmae_histogram(rep.per_customer_nmae / 100.0)
            for i, count in enumerate(counts):
                writer.writerow([
                    rep.method, _fmt(edges[i]), _fmt(edges[i + 1]), int(count),
                ])


def _deterministic_figure(figsize):
    plt.rcParams["svg.hashsalt"] = SVG_HASHSALT
    return plt.subplots(figsize=figsize)


def render_fig6_svg(path: str | Path, reports: list[EvalReport]) -> None:
    """Hourly boxplot of disaggregation error for each method."""
    fig, axes = plt.subplots(
        len(reports), 1, figsize=(9, 2.8 * len(reports)), squeeze=False
    )
    plt.rcParams["svg.hashsalt"] = SVG_HASHSALT
    for ax, rep in zip(axes[:, 0], reports):
        stats = []
        for hour in range(24):
            lo, q1, med, q3, hi = rep.hourly_quartiles[hour]
            stats.append({
                "label": str(hour), "whislo": lo, "q1": q1,
                "med": med, "q3": q3, "whishi": hi, "fliers": [],
            })
        ax.bxp(stats, showfliers=False)
        ax.set_ylabel("|error| / rating")
        ax.set_title(rep.method)
    axes[-1, 0].set_xlabel("hour of day")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_NO_DATE)
    plt.close(fig)


def render_fig8_svg(path: str | Path, reports: list[EvalReport]) -> None:
    """Per-customer nMAE distribution, one step histogram per method."""
    fig, ax = _deterministic_figure((7, 4))
    for rep in reports:
        counts, edges = nmae_histogram(rep.per_customer_nmae / 100.0)
        ax.stairs(counts, edges, label=rep.method, fill=False)
    ax.set_xlabel("per-customer nMAE (fraction)")
    ax.set_ylabel("customers")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_NO_DATE)
    plt.close(fig)
