"""Pipeline configuration: one YAML file, every default made explicit.

Unknown keys are rejected rather than ignored so a typo cannot silently
fall back to a default, and each run directory receives a resolved copy
with all effective values materialized.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .finetune import FineTuneConfig, SolverParams
from .ica import IcaOptions
from .preprocessing import ClassifyParams, LiulParams
from .synth import CorpusConfig


@dataclass(frozen=True)
class PipelineOptions:
    """Orchestration knobs not owned by a single stage."""

    k_use: int = 10
    outer_passes: int = 1
    max_missing_fraction: float = 0.05
    resample_minutes: int = 15

    def __post_init__(self):
        if self.k_use < 3:
            raise ConfigError("k_use must be >= 3")
        if self.outer_passes < 1:
            raise ConfigError("outer_passes must be >= 1")
        if not 0 <= self.max_missing_fraction < 1:
            raise ConfigError("max_missing_fraction must be in [0, 1)")
        if self.resample_minutes < 1:
            raise ConfigError("resample_minutes must be >= 1")


@dataclass(frozen=True)
class EvalOptions:
    rating_percentile: float = 99.0
    nameplate_rating_kw: float | None = None

    def __post_init__(self):
        if not 0 < self.rating_percentile <= 100:
            raise ConfigError("rating_percentile must be in (0, 100]")
        if self.nameplate_rating_kw is not None and self.nameplate_rating_kw <= 0:
            raise ConfigError("nameplate_rating_kw must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    workers: int = 1
    corpus_dir: str = "corpus"
    out_dir: str = "run"
    pipeline: PipelineOptions = field(default_factory=PipelineOptions)
    synth: CorpusConfig = field(default_factory=CorpusConfig)
    classify: ClassifyParams = field(default_factory=ClassifyParams)
    liul: LiulParams = field(default_factory=LiulParams)
    ica: IcaOptions = field(default_factory=IcaOptions)
    finetune: FineTuneConfig = field(default_factory=FineTuneConfig)
    evaluation: EvalOptions = field(default_factory=EvalOptions)

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _pair(value, cast=float) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"expected a 2-element list, got {value!r}")
    return (cast(value[0]), cast(value[1]))


def _build(cls, data, section: str, converters=None):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        conv = (converters or {}).get(key)
        try:
            kwargs[key] = conv(value) if conv else value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}.{key}: {exc}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {section!r}: {exc}") from None


def _build_finetune(data) -> FineTuneConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("section 'finetune' must be a mapping")
    data = dict(data)
    solver = _build(SolverParams, data.pop("solver", None), "finetune.solver")
    cfg = _build(
        FineTuneConfig,
        data,
        "finetune",
        converters={
            "diurnal_window": lambda v: _pair(v, int),
            "nocturnal_window": lambda v: _pair(v, int),
        },
    )
    return dataclasses.replace(cfg, solver=solver)


_SECTIONS = {
    "pipeline": lambda d: _build(PipelineOptions, d, "pipeline"),
    "synth": lambda d: _build(
        CorpusConfig,
        d,
        "synth",
        converters={
            "rating_range_kw": _pair,
            "setpoint_range_c": _pair,
            "base_scale_range": _pair,
        },
    ),
    "classify": lambda d: _build(ClassifyParams, d, "classify"),
    "liul": lambda d: _build(LiulParams, d, "liul"),
    "ica": lambda d: _build(IcaOptions, d, "ica"),
    "finetune": _build_finetune,
    "evaluation": lambda d: _build(EvalOptions, d, "evaluation"),
}

_SCALARS = ("seed", "workers", "corpus_dir", "out_dir")


def config_from_mapping(data: dict | None) -> PipelineConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(data) - set(_SECTIONS) - set(_SCALARS))
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs = {name: data[name] for name in _SCALARS if name in data}
    for name, builder in _SECTIONS.items():
        kwargs[name] = builder(data.get(name))
    try:
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None) -> PipelineConfig:
    """Read a YAML config; a missing path means all defaults."""
    if path is None:
        return config_from_mapping({})
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    return config_from_mapping(data)


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def resolved_dict(cfg: PipelineConfig) -> dict:
    """Fully materialized config, defaults included, YAML-serializable."""
    out = {name: getattr(cfg, name) for name in _SCALARS}
    for name in _SECTIONS:
        out[name] = _plain(dataclasses.asdict(getattr(cfg, name)))
    return out


def write_resolved(cfg: PipelineConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(resolved_dict(cfg), fh, sort_keys=True)
