"""Scenario construction and the experiment runner behind the CLI."""

from __future__ import annotations

import re
from pathlib import Path

from . import baselines, regional
from .config import ExperimentConfig
from .datasets import (
    Dataset,
    RegionSpec,
    assign_devices,
    load_idx,
    partition_dirichlet,
    partition_hard,
    partition_iid,
    synth_dataset,
)
from .federation import FederationData
from .metrics import (
    MetricsRecord,
    read_csv,
    summarize,
    write_csv,
    write_plot_data,
    write_summary,
)
from .mlp import MlpShape, init_model
from .netsim import World, build_unit_disk, check_connected, cluster_layout, grid_centers
from .seeds import device_seed, mix64

_LAYOUT_TAG = 0x10
_TRAIN_TAG = 0x20
_TEST_TAG = 0x21
_SPLIT_TAG = 0x30
_ASSIGN_TAG = 0x31
_INIT_TAG = 0x40

_IDX_FILES = {
    "mnist": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
              "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    "fashion": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    "emnist": ("emnist-letters-train-images-idx3-ubyte", "emnist-letters-train-labels-idx1-ubyte",
               "emnist-letters-test-images-idx3-ubyte", "emnist-letters-test-labels-idx1-ubyte"),
}


def _find_idx(directory: Path, stem: str) -> str:
    for candidate in (directory / stem, directory / f"{stem}.gz"):
        if candidate.exists():
            return str(candidate)
    raise FileNotFoundError(f"missing IDX file {stem}[.gz] under {directory}")


def _load_dataset(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, Dataset, int, int]:
    """Returns (train, test, n_features, n_classes) for the configured source."""
    ds = cfg.dataset
    if ds.kind == "synthetic":
        train = synth_dataset(
            ds.classes, ds.train_per_class, ds.features,
            mix64(seed, _TRAIN_TAG), separation=ds.separation,
        )
        test = synth_dataset(
            ds.classes, ds.test_per_class, ds.features,
            mix64(seed, _TEST_TAG), separation=ds.separation,
        )
        return train, test, ds.features, ds.classes
    directory = Path(ds.idx_dir)
    ti, tl, vi, vl = _IDX_FILES[ds.kind]
    train = load_idx(_find_idx(directory, ti), _find_idx(directory, tl))
    test = load_idx(_find_idx(directory, vi), _find_idx(directory, vl))
    if ds.train_size is not None:
        train = _subsample(train, ds.train_size, mix64(seed, _TRAIN_TAG))
    if ds.test_size is not None:
        test = _subsample(test, ds.test_size, mix64(seed, _TEST_TAG))
    n_classes = int(max(train.labels.max(), test.labels.max())) + 1
    return train, test, train.n_features, n_classes


def _subsample(dataset: Dataset, size: int, seed: int) -> Dataset:
    import numpy as np

    if size >= len(dataset):
        return dataset
    rng = np.random.default_rng(seed)
    return dataset.subset(rng.choice(len(dataset), size=size, replace=False))


def _partition(dataset: Dataset, cfg: ExperimentConfig, seed: int) -> list[Dataset]:
    kind = cfg.partition.kind
    split_seed = mix64(seed, _SPLIT_TAG)
    if kind == "iid":
        return partition_iid(dataset, cfg.regions, split_seed)
    if kind == "dirichlet":
        return partition_dirichlet(dataset, cfg.regions, cfg.partition.alpha, split_seed)
    return partition_hard(dataset, cfg.regions, split_seed)


def _cluster_counts(devices: int, regions: int) -> list[int]:
    base, extra = divmod(devices, regions)
    return [base + (1 if k < extra else 0) for k in range(regions)]


def build_scenario(cfg: ExperimentConfig, seed: int) -> tuple[World, FederationData]:
    """Materialize one seeded scenario: placement, topology, shards, model."""
    counts = _cluster_counts(cfg.devices, cfg.regions)
    centers = grid_centers(cfg.regions, cfg.topology.cluster_gap)
    positions = cluster_layout(centers, counts, cfg.topology.spread, mix64(seed, _LAYOUT_TAG))
    topology = build_unit_disk(positions, cfg.topology.comm_range)

    train, test, n_features, n_classes = _load_dataset(cfg, seed)
    train_regions = _partition(train, cfg, seed)
    test_regions = _partition(test, cfg, seed)

    specs = []
    dev = 0
    for k, count in enumerate(counts):
        specs.append(RegionSpec(region_id=k, member_devices=tuple(range(dev, dev + count))))
        dev += count
    shards = assign_devices(train_regions, specs, cfg.samples_per_device, mix64(seed, _ASSIGN_TAG))
    region_of = {d: spec.region_id for spec in specs for d in spec.member_devices}

    shape = MlpShape((n_features, *cfg.model.hidden, n_classes))
    init = init_model(shape, mix64(seed, _INIT_TAG))
    seeds = {d: device_seed(seed, d) for d in sorted(shards)}

    fed = FederationData(
        shards=shards,
        region_of=region_of,
        region_tests={spec.region_id: test_regions[spec.region_id] for spec in specs},
        pooled_test=test,
        init_params=init,
        device_seeds=seeds,
        master_seed=seed,
    )
    world = World(topology=topology, shards=shards, rng_seeds=seeds)
    return world, fed


def run_single(cfg: ExperimentConfig, seed: int) -> list[MetricsRecord]:
    """One seeded run of the configured algorithm."""
    world, fed = build_scenario(cfg, seed)
    if cfg.algorithm == "regional":
        failure = None
        if cfg.failure is not None:
            failure = regional.FailureSpec(
                fl_round=cfg.failure.round, victims=cfg.failure.victims
            )
        run_cfg = regional.RegionalRunConfig(
            radius=cfg.radius,
            rounds=cfg.rounds,
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            learning_rate=cfg.learning_rate,
            field_ratio=cfg.field_ratio,
            warmup_rounds=cfg.warmup_rounds,
            failure=failure,
        )
        _world, records = regional.run_regional(world, fed, run_cfg)
        return records
    if not check_connected(world.topology):
        raise ValueError("scenario topology is disconnected")
    central_cfg = baselines.CentralConfig(
        rounds=cfg.rounds,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        mu=cfg.mu,
        global_lr=cfg.global_lr,
        scaffold_option=cfg.scaffold_option,
    )
    return baselines.run_centralized(cfg.algorithm, fed, central_cfg)


def raw_csv_name(algorithm: str, seed: int) -> str:
    return f"raw_{algorithm}_seed{seed}.csv"


def run_experiment(
    cfg: ExperimentConfig, out_dir: str | Path, seeds: tuple[int, ...] | None = None
) -> list[Path]:
    """Run every seed, write one raw CSV each, then refresh the aggregates."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for seed in seeds if seeds is not None else cfg.seeds:
        records = run_single(cfg, seed)
        path = out / raw_csv_name(cfg.algorithm, seed)
        write_csv(path, records)
        written.append(path)
    summarize_directory(out)
    return written


_RAW_RE = re.compile(r"raw_(?P<algorithm>[a-z]+)_seed(?P<seed>-?\d+)\.csv$")


def summarize_directory(out_dir: str | Path) -> tuple[Path, Path]:
    """Aggregate every raw CSV under out_dir into summary and plot data files."""
    out = Path(out_dir)
    grouped: dict[str, list[list[dict]]] = {}
    for path in sorted(out.glob("raw_*.csv")):
        match = _RAW_RE.search(path.name)
        if not match:
            continue
        grouped.setdefault(match.group("algorithm"), []).append(read_csv(path))
    if not grouped:
        raise FileNotFoundError(f"no raw_*.csv files under {out}")
    rows = summarize(grouped)
    aggregate = out / "aggregate.csv"
    plot_data = out / "plotdata.csv"
    write_summary(aggregate, rows)
    write_summary(plot_data, rows)
    return aggregate, plot_data
