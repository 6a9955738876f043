"""HVAC load disaggregation from 15-minute smart-meter data.

Separates the air-conditioning load from a household's aggregate meter
using mild days as base-load templates, blind source separation on
hot-minus-mild residual ensembles, and a constrained adjustment that
keeps hourly HVAC energy on a temperature-driven curve.  A seeded
synthetic generator supplies ground truth for end-to-end validation.
"""

from .config import EvalOptions, PipelineConfig, PipelineOptions, load_config
from .errors import ConfigError, DataError, DisaggError, SolverError
from .evaluation import (
    EvalReport,
    benchmark_average_mild,
    hourly_error_stats,
    nee,
    nmae,
    nmae_histogram,
    rating_from_truth,
)
from .finetune import (
    BivariateGaussian,
    DisaggregationResult,
    FineTuneConfig,
    SolverParams,
    diurnal_nocturnal_energy,
    estimate_base_stats,
    fine_tune,
    fit_hourly_bound,
    hourly_bound_model,
    kl_bivariate_gaussian,
)
from .ica import IcaModel, IcaOptions, WhiteningModel, center_and_whiten, fastica_2comp, run_ica, select_hvac
from .ingestion import (
    DailyLoadMatrix,
    TemperatureMatrix,
    TimeSeries,
    build_day_matrix,
    build_temperature_matrix,
    load_power_csv,
    load_temperature_csv,
    load_truth_csv,
    resample_mean,
)
from .pipeline import disaggregate_run, discover_corpus, evaluate_run, write_run_outputs
from .preprocessing import (
    ClassifyParams,
    DayLabel,
    LiulEvent,
    LiulParams,
    ResidualEnsemble,
    build_residual_ensemble,
    classify_days,
    filter_liul,
    ks_statistic,
    verify_mild_distribution,
)
from .synth import CorpusConfig, HouseholdSpec, generate_corpus, generate_household, generate_temperature, write_corpus

__version__ = "0.1.0"

__all__ = [
    "BivariateGaussian", "ClassifyParams", "ConfigError", "CorpusConfig",
    "DailyLoadMatrix", "DataError", "DayLabel", "DisaggError",
    "DisaggregationResult", "EvalOptions", "EvalReport", "FineTuneConfig",
    "HouseholdSpec", "IcaModel", "IcaOptions", "LiulEvent", "LiulParams",
    "PipelineConfig", "PipelineOptions", "ResidualEnsemble", "SolverError",
    "SolverParams", "TemperatureMatrix", "TimeSeries", "WhiteningModel",
    "benchmark_average_mild", "build_day_matrix", "build_residual_ensemble",
    "build_temperature_matrix", "center_and_whiten", "classify_days",
    "disaggregate_run", "discover_corpus", "diurnal_nocturnal_energy",
    "estimate_base_stats", "evaluate_run", "fastica_2comp", "filter_liul",
    "fine_tune", "fit_hourly_bound", "generate_corpus", "generate_household",
    "generate_temperature", "hourly_bound_model", "hourly_error_stats",
    "kl_bivariate_gaussian", "ks_statistic", "load_config", "load_power_csv",
    "load_temperature_csv", "load_truth_csv", "nee", "nmae", "nmae_histogram",
    "rating_from_truth", "resample_mean", "run_ica", "select_hvac",
    "verify_mild_distribution", "write_corpus", "write_run_outputs",
]
