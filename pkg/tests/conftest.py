"""Session fixtures: one large benchmark run and one small CLI corpus.

Both are generated once per session because the disaggregation pass over the
large corpus dominates suite runtime.
"""

from __future__ import annotations

import time
from types import SimpleNamespace

import pytest

from hvacdisagg.cli import main as cli_main
from hvacdisagg.config import config_from_mapping
from hvacdisagg.pipeline import disaggregate_run, evaluate_run, write_run_outputs
from hvacdisagg.synth import generate_corpus, write_corpus

from helpers import read_truth_matrix

BENCH_SYNTH = {
    "n_households": 20,
    "n_hot_days": 30,
    "n_mild_days": 15,
    "n_warm_days": 3,
    "seed": 0,
}


def bench_config(root):
    return config_from_mapping(
        {
            "seed": 0,
            "workers": 1,
            "corpus_dir": str(root / "corpus"),
            "out_dir": str(root / "run"),
            "synth": BENCH_SYNTH,
        }
    )


@pytest.fixture(scope="session")
def bench_run(tmp_path_factory):
    """Full synth -> disaggregate -> evaluate pass on a 20-household corpus.

    Keeps the in-memory run objects so tests can check constraints on the
    exact solver outputs rather than on rounded CSV round-trips.
    """
    root = tmp_path_factory.mktemp("bench")
    cfg = bench_config(root)
    t0 = time.perf_counter()
    write_corpus(generate_corpus(cfg.synth), cfg.corpus_dir)
    runs = disaggregate_run(cfg)
    write_run_outputs(cfg, runs)
    report = evaluate_run(cfg)
    elapsed = time.perf_counter() - t0
    truth = {
        run.household_id: read_truth_matrix(cfg.corpus_dir, run.household_id)
        for run in runs
    }
    return SimpleNamespace(
        root=root, cfg=cfg, runs=runs, report=report, truth=truth, elapsed_s=elapsed
    )


CLI_CONFIG = """\
seed: 11
corpus_dir: {corpus}
out_dir: {run}
synth:
  n_households: 3
  n_hot_days: 6
  n_mild_days: 8
  n_warm_days: 0
  seed: 11
"""


@pytest.fixture(scope="session")
def cli_run(tmp_path_factory):
    """Small corpus built and disaggregated through the CLI entry point."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    run = root / "run"
    cfg_path = root / "config.yaml"
    cfg_path.write_text(CLI_CONFIG.format(corpus=corpus, run=run))
    assert cli_main(["synth", "--config", str(cfg_path)]) == 0
    assert cli_main(["disaggregate", "--config", str(cfg_path)]) == 0
    assert cli_main(["evaluate", "--config", str(cfg_path)]) == 0
    return SimpleNamespace(root=root, config=cfg_path, corpus=corpus, run=run)
