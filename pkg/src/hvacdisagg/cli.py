"""Command-line entry point: synth, disaggregate, evaluate, report.

Exit codes: 0 success, 2 configuration problem, 3 data problem,
4 run finished but some hot days ended infeasible.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import PipelineConfig, load_config
from .errors import ConfigError, DataError, SolverError
from .pipeline import disaggregate_run, evaluate_run, render_figures, write_run_outputs
from .synth import generate_corpus, write_corpus

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hvacdisagg",
        description="Disaggregate residential HVAC load from smart-meter data.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (defaults apply if omitted)")
    common.add_argument("--seed", type=int, help="override the global seed")

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic corpus with ground truth")
    p.add_argument("--out", help="corpus output directory (default: corpus_dir)")

    p = sub.add_parser("disaggregate", parents=[common],
                       help="run the full disaggregation workflow")
    p.add_argument("--out", help="run output directory (default: out_dir)")
    p.add_argument("--workers", type=int, help="parallel household workers")

    p = sub.add_parser("evaluate", parents=[common],
                       help="score estimates against ground truth, write report CSVs")
    p.add_argument("--out", help="run directory holding disaggregation outputs")

    p = sub.add_parser("report", parents=[common],
                       help="evaluate and additionally render SVG figures")
    p.add_argument("--out", help="run directory holding disaggregation outputs")
    return parser


def _configure(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
        cfg = dataclasses.replace(
            cfg, synth=dataclasses.replace(cfg.synth, seed=args.seed)
        )
    if getattr(args, "workers", None) is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    if getattr(args, "out", None):
        if args.command == "synth":
            cfg = dataclasses.replace(cfg, corpus_dir=args.out)
        else:
            cfg = dataclasses.replace(cfg, out_dir=args.out)
    return cfg


def _cmd_synth(cfg: PipelineConfig) -> int:
    corpus = generate_corpus(cfg.synth)
    manifest = write_corpus(corpus, cfg.corpus_dir)
    print(f"wrote {len(corpus.households)} household(s), "
          f"{corpus.config.n_days} day(s) each -> {manifest.parent}")
    return EXIT_OK


def _cmd_disaggregate(cfg: PipelineConfig) -> int:
    runs = disaggregate_run(cfg)
    out = write_run_outputs(cfg, runs)
    n_days = sum(len(r.results) for r in runs)
    n_bad = sum(r.infeasible_count for r in runs)
    print(f"disaggregated {n_days} hot day(s) across {len(runs)} household(s) -> {out}")
    if n_bad:
        print(f"{n_bad} day(s) infeasible; see results.csv")
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_evaluate(cfg: PipelineConfig, figures: bool) -> int:
    result = evaluate_run(cfg)
    for rep in result["reports"]:
        print(f"{rep.method:>10}: nMAE {rep.nmae_mean:6.2f} % "
              f"(std {rep.nmae_std:5.2f}), nEE {rep.nee_mean:6.2f} %")
    if figures:
        for path in render_figures(cfg, result["reports"]):
            print(f"figure -> {path}")
    print(f"reports -> {result['out_dir']}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _configure(args)
        if args.command == "synth":
            return _cmd_synth(cfg)
        if args.command == "disaggregate":
            return _cmd_disaggregate(cfg)
        if args.command == "evaluate":
            return _cmd_evaluate(cfg, figures=False)
        if args.command == "report":
            return _cmd_evaluate(cfg, figures=True)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataError, SolverError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
