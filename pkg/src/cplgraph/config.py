"""Experiment configuration: schema, defaults, validation, JSON loading.

A config is a single JSON object; committed examples for both tasks live in
``configs/``. Seeds in the ``seeds`` list drive independent runs; the
per-component base seeds below are mixed with the run seed so that two runs
never share random streams.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

from .augment import MODES, AugmentationPlan
from .util import ConfigError

SCHEMA_VERSION = 1

TASKS = ("node", "link")
STRATEGIES = ("cautious", "random", "none")


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "sbm"
    # sbm fields
    block_sizes: tuple = (200, 200)
    p_in: float = 0.05
    p_out: float = 0.01
    seed: int = 0
    features: str = "identity"
    # file fields
    edges: str = ""
    features_path: str = ""
    labels_path: str = ""


@dataclass(frozen=True)
class SplitConfig:
    ratios: tuple = (0.05, 0.15, 0.80)
    seed: int = 0


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 32
    embed_dim: int = 16
    init_seed: int = 0


@dataclass(frozen=True)
class TrainingConfig:
    pretrain_epochs: int = 200
    finetune_epochs: int = 50
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    neg_seed: int = 0
    finetune_from_scratch: bool = False


@dataclass(frozen=True)
class PlConfig:
    k: int = 20
    cap: int = 200
    strategy: str = "cautious"
    pool_max_pairs: int = 1_000_000
    full_pool_node_limit: int = 3000


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    task: str = "node"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    augmentation: AugmentationPlan = field(default_factory=AugmentationPlan)
    pl: PlConfig = field(default_factory=PlConfig)
    seeds: tuple = (1,)
    output_dir: str = "runs"
    gpi_trials: int = 0


_SECTION_TYPES = {
    "dataset": DatasetConfig,
    "split": SplitConfig,
    "model": ModelConfig,
    "training": TrainingConfig,
    "augmentation": AugmentationPlan,
    "pl": PlConfig,
}


def _build_section(name: str, cls, payload: dict):
    if not isinstance(payload, dict):
        raise ConfigError(f"section '{name}' must be an object")
    allowed = {f for f in cls.__dataclass_fields__}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"section '{name}': unknown keys {sorted(unknown)}")
    coerced = {}
    for key, value in payload.items():
        if isinstance(value, list):
            value = tuple(value)
        coerced[key] = value
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section '{name}': {exc}") from None


def config_from_dict(payload: dict) -> ExperimentConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    top_allowed = set(ExperimentConfig.__dataclass_fields__) | {"schema_version"}
    unknown = set(payload) - top_allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    version = payload.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    kwargs = {}
    for key, value in payload.items():
        if key == "schema_version":
            continue
        if key in _SECTION_TYPES:
            kwargs[key] = _build_section(key, _SECTION_TYPES[key], value)
        elif key == "seeds":
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        cfg = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    validate_config(cfg)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(payload)


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}")
    if cfg.pl.strategy not in STRATEGIES:
        raise ConfigError(f"pl.strategy must be one of {STRATEGIES}")
    if cfg.pl.k < 0:
        raise ConfigError("pl.k must be non-negative")
    if cfg.pl.cap < 0:
        raise ConfigError("pl.cap must be non-negative")
    if not cfg.seeds:
        raise ConfigError("seeds must be non-empty")
    if any(int(s) < 0 for s in cfg.seeds):
        raise ConfigError("seeds must be non-negative")
    ratios = cfg.split.ratios
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigError("split.ratios must be three non-negative numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError("split.ratios must sum to 1")
    ds = cfg.dataset
    if ds.kind == "sbm":
        if not ds.block_sizes or any(int(s) <= 0 for s in ds.block_sizes):
            raise ConfigError("dataset.block_sizes must be positive")
        for name, p in (("p_in", ds.p_in), ("p_out", ds.p_out)):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"dataset.{name} must lie in [0, 1]")
        if ds.features != "identity":
            raise ConfigError("dataset.features supports only 'identity'")
    elif ds.kind == "files":
        if not ds.edges:
            raise ConfigError("dataset.edges path is required for kind 'files'")
        if not ds.features_path:
            raise ConfigError("dataset.features_path is required for kind 'files'")
        if cfg.task == "node" and not ds.labels_path:
            raise ConfigError("dataset.labels_path is required for node tasks")
    else:
        raise ConfigError("dataset.kind must be 'sbm' or 'files'")
    for name, value in (
        ("pretrain_epochs", cfg.training.pretrain_epochs),
        ("finetune_epochs", cfg.training.finetune_epochs),
    ):
        if value < 0:
            raise ConfigError(f"training.{name} must be non-negative")
    if cfg.training.learning_rate <= 0:
        raise ConfigError("training.learning_rate must be positive")
    if cfg.model.hidden_dim < 1 or cfg.model.embed_dim < 1:
        raise ConfigError("model dims must be positive")
    if cfg.gpi_trials < 0:
        raise ConfigError("gpi_trials must be non-negative")
    if cfg.augmentation.mode not in MODES:
        raise ConfigError(f"augmentation.mode must be one of {MODES}")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain-JSON echo of the config, as written into reports."""
    out = {"schema_version": SCHEMA_VERSION}
    raw = asdict(cfg)
    for key in sorted(raw):
        value = raw[key]
        if isinstance(value, dict):
            value = {k: (list(v) if isinstance(v, tuple) else v) for k, v in value.items()}
        elif isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out


def with_strategy(cfg: ExperimentConfig, strategy: str) -> ExperimentConfig:
    if strategy not in STRATEGIES:
        raise ConfigError(f"strategy must be one of {STRATEGIES}")
    return replace(cfg, pl=replace(cfg.pl, strategy=strategy))
