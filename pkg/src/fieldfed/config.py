"""Experiment configuration: YAML schema, strict validation, defaults."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

ALGORITHMS = ("fedavg", "fedprox", "scaffold", "regional")
DATASET_KINDS = ("synthetic", "mnist", "fashion", "emnist")
PARTITION_KINDS = ("iid", "dirichlet", "hard")


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending key path."""


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"
    classes: int = 8
    features: int = 16
    separation: float = 3.0
    train_per_class: int = 800
    test_per_class: int = 200
    idx_dir: str | None = None
    train_size: int | None = None
    test_size: int | None = None


@dataclass(frozen=True)
class PartitionConfig:
    kind: str = "iid"
    alpha: float = 0.5


@dataclass(frozen=True)
class TopologyConfig:
    cluster_gap: float = 8.0
    spread: float = 3.0
    comm_range: float = 6.5


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = (16,)


@dataclass(frozen=True)
class FailureConfig:
    round: int = 10
    victims: int = 2


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "fedavg"
    rounds: int = 20
    epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 0.05
    mu: float = 0.1
    global_lr: float = 1.0
    scaffold_option: int = 2
    radius: float = 4.5
    field_ratio: int | None = None  # None ("auto"): 2 * (hop diameter + 1)
    warmup_rounds: int | None = None
    regions: int = 1
    devices: int = 10
    samples_per_device: int = 100
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    dataset: DatasetConfig = DatasetConfig()
    partition: PartitionConfig = PartitionConfig()
    topology: TopologyConfig = TopologyConfig()
    model: ModelConfig = ModelConfig()
    failure: FailureConfig | None = None


def default_config_dict() -> dict:
    return {
        "algorithm": "fedavg",
        "rounds": 20,
        "epochs": 1,
        "batch_size": 32,
        "learning_rate": 0.05,
        "mu": 0.1,
        "global_lr": 1.0,
        "scaffold_option": 2,
        "radius": 4.5,
        "field_ratio": "auto",
        "warmup_rounds": "auto",
        "regions": 1,
        "devices": 10,
        "samples_per_device": 100,
        "seeds": [1, 2, 3, 4, 5],
        "dataset": {
            "kind": "synthetic",
            "classes": 8,
            "features": 16,
            "separation": 3.0,
            "train_per_class": 800,
            "test_per_class": 200,
            "idx_dir": None,
            "train_size": None,
            "test_size": None,
        },
        "partition": {"kind": "iid", "alpha": 0.5},
        "topology": {"cluster_gap": 8.0, "spread": 3.0, "comm_range": 6.5},
        "model": {"hidden": [16]},
        "failure": None,
    }


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _check_keys(section: dict, allowed: set[str], path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {_join(path, key)!r}")


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _as_int(value: Any, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path!r} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path!r} must be >= {minimum}, got {value}")
    return value


def _as_float(value: Any, path: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path!r} must be a number, got {value!r}")
    value = float(value)
    if positive and value <= 0:
        raise ConfigError(f"{path!r} must be positive, got {value}")
    if not math.isfinite(value):
        raise ConfigError(f"{path!r} must be finite")
    return value


def _as_choice(value: Any, path: str, choices: tuple[str, ...]) -> str:
    if value not in choices:
        raise ConfigError(f"{path!r} must be one of {list(choices)}, got {value!r}")
    return value


def _as_auto_int(value: Any, path: str) -> int | None:
    if value is None or value == "auto":
        return None
    return _as_int(value, path, minimum=1)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping strictly and build the experiment config."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    defaults = default_config_dict()
    _check_keys(raw, set(defaults), path="")
    merged = {**defaults, **raw}

    algorithm = _as_choice(merged["algorithm"], "algorithm", ALGORITHMS)
    rounds = _as_int(merged["rounds"], "rounds", minimum=0)
    epochs = _as_int(merged["epochs"], "epochs", minimum=0)
    batch_size = _as_int(merged["batch_size"], "batch_size", minimum=1)
    learning_rate = _as_float(merged["learning_rate"], "learning_rate", positive=True)
    mu = _as_float(merged["mu"], "mu")
    _require(mu >= 0, "'mu' must be non-negative")
    global_lr = _as_float(merged["global_lr"], "global_lr", positive=True)
    scaffold_option = _as_int(merged["scaffold_option"], "scaffold_option")
    _require(scaffold_option in (1, 2), "'scaffold_option' must be 1 or 2")
    radius = _as_float(merged["radius"], "radius", positive=True)
    field_ratio = _as_auto_int(merged["field_ratio"], "field_ratio")
    warmup_rounds = _as_auto_int(merged["warmup_rounds"], "warmup_rounds")
    regions = _as_int(merged["regions"], "regions", minimum=1)
    devices = _as_int(merged["devices"], "devices", minimum=1)
    samples_per_device = _as_int(merged["samples_per_device"], "samples_per_device", minimum=1)

    seeds_raw = merged["seeds"]
    if not isinstance(seeds_raw, (list, tuple)) or not seeds_raw:
        raise ConfigError("'seeds' must be a non-empty list of integers")
    seeds = tuple(_as_int(s, "seeds[]") for s in seeds_raw)

    dataset_raw = merged["dataset"] or {}
    _check_keys(dataset_raw, set(defaults["dataset"]), "dataset")
    dmerged = {**defaults["dataset"], **dataset_raw}
    dataset = DatasetConfig(
        kind=_as_choice(dmerged["kind"], "dataset.kind", DATASET_KINDS),
        classes=_as_int(dmerged["classes"], "dataset.classes", minimum=2),
        features=_as_int(dmerged["features"], "dataset.features", minimum=1),
        separation=_as_float(dmerged["separation"], "dataset.separation", positive=True),
        train_per_class=_as_int(dmerged["train_per_class"], "dataset.train_per_class", minimum=1),
        test_per_class=_as_int(dmerged["test_per_class"], "dataset.test_per_class", minimum=1),
        idx_dir=dmerged["idx_dir"],
        train_size=None if dmerged["train_size"] is None else _as_int(dmerged["train_size"], "dataset.train_size", minimum=1),
        test_size=None if dmerged["test_size"] is None else _as_int(dmerged["test_size"], "dataset.test_size", minimum=1),
    )
    if dataset.kind != "synthetic" and not dataset.idx_dir:
        raise ConfigError(f"'dataset.idx_dir' is required for dataset.kind={dataset.kind!r}")

    partition_raw = merged["partition"] or {}
    _check_keys(partition_raw, set(defaults["partition"]), "partition")
    pmerged = {**defaults["partition"], **partition_raw}
    partition = PartitionConfig(
        kind=_as_choice(pmerged["kind"], "partition.kind", PARTITION_KINDS),
        alpha=_as_float(pmerged["alpha"], "partition.alpha", positive=True),
    )

    topology_raw = merged["topology"] or {}
    _check_keys(topology_raw, set(defaults["topology"]), "topology")
    tmerged = {**defaults["topology"], **topology_raw}
    topology = TopologyConfig(
        cluster_gap=_as_float(tmerged["cluster_gap"], "topology.cluster_gap", positive=True),
        spread=_as_float(tmerged["spread"], "topology.spread", positive=True),
        comm_range=_as_float(tmerged["comm_range"], "topology.comm_range", positive=True),
    )

    model_raw = merged["model"] or {}
    _check_keys(model_raw, set(defaults["model"]), "model")
    mmerged = {**defaults["model"], **model_raw}
    hidden_raw = mmerged["hidden"]
    if not isinstance(hidden_raw, (list, tuple)):
        raise ConfigError("'model.hidden' must be a list of layer widths")
    model = ModelConfig(hidden=tuple(_as_int(h, "model.hidden[]", minimum=1) for h in hidden_raw))

    failure_raw = merged["failure"]
    failure = None
    if failure_raw is not None:
        _check_keys(failure_raw, {"round", "victims"}, "failure")
        failure = FailureConfig(
            round=_as_int(failure_raw.get("round", 10), "failure.round", minimum=0),
            victims=_as_int(failure_raw.get("victims", 2), "failure.victims", minimum=1),
        )

    if partition.kind == "hard" and regions > dataset.classes:
        raise ConfigError(
            f"hard partition needs regions <= dataset.classes "
            f"({regions} > {dataset.classes})"
        )
    _require(devices >= regions, "'devices' must be at least 'regions'")

    return ExperimentConfig(
        algorithm=algorithm,
        rounds=rounds,
        epochs=epochs,
        batch_size=batch_size,
        learning_rate=learning_rate,
        mu=mu,
        global_lr=global_lr,
        scaffold_option=scaffold_option,
        radius=radius,
        field_ratio=field_ratio,
        warmup_rounds=warmup_rounds,
        regions=regions,
        devices=devices,
        samples_per_device=samples_per_device,
        seeds=seeds,
        dataset=dataset,
        partition=partition,
        topology=topology,
        model=model,
        failure=failure,
    )


def parse_config(path: str | Path) -> ExperimentConfig:
    """Load and strictly validate a YAML experiment configuration."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if raw is None:
        raw = {}
    return config_from_dict(raw)


def print_defaults() -> str:
    return yaml.safe_dump(default_config_dict(), sort_keys=False)
