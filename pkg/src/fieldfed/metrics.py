"""Per-round, per-device metrics records plus CSV output and aggregation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from statistics import mean, stdev
from typing import Iterable, Sequence

from .datasets import Dataset, Shard
from .mlp import ModelParams, evaluate

COLUMNS = (
    "seed",
    "fl_round",
    "device",
    "region",
    "train_loss",
    "val_loss",
    "val_accuracy",
    "global_val_accuracy",
    "bytes_sent",
    "is_leader",
)

NUMERIC_COLUMNS = (
    "train_loss",
    "val_loss",
    "val_accuracy",
    "global_val_accuracy",
    "bytes_sent",
)


@dataclass(frozen=True)
class MetricsRecord:
    seed: int
    fl_round: int
    device: int
    region: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    global_val_accuracy: float
    bytes_sent: int
    is_leader: bool


def device_record(
    *,
    seed: int,
    fl_round: int,
    device: int,
    region: int,
    is_leader: bool,
    model: ModelParams,
    shard: Shard,
    region_test: Dataset,
    pooled_test: Dataset,
    bytes_sent: int,
) -> MetricsRecord:
    """Evaluate one device's current model on its shard and test sets."""
    train_loss, _ = evaluate(model, shard.data.features, shard.data.labels)
    val_loss, val_acc = evaluate(model, region_test.features, region_test.labels)
    _, global_acc = evaluate(model, pooled_test.features, pooled_test.labels)
    return MetricsRecord(
        seed=seed,
        fl_round=fl_round,
        device=device,
        region=region,
        train_loss=train_loss,
        val_loss=val_loss,
        val_accuracy=val_acc,
        global_val_accuracy=global_acc,
        bytes_sent=bytes_sent,
        is_leader=is_leader,
    )


def write_csv(path: str | Path, records: Sequence[MetricsRecord]) -> None:
    """Write records with the fixed column order; floats use repr round-trip."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.seed,
                    r.fl_round,
                    r.device,
                    r.region,
                    repr(r.train_loss),
                    repr(r.val_loss),
                    repr(r.val_accuracy),
                    repr(r.global_val_accuracy),
                    r.bytes_sent,
                    int(r.is_leader),
                ]
            )


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != COLUMNS:
            raise ValueError(f"{path}: unexpected CSV schema {reader.fieldnames}")
        rows = []
        for raw in reader:
            rows.append(
                {
                    "seed": int(raw["seed"]),
                    "fl_round": int(raw["fl_round"]),
                    "device": int(raw["device"]),
                    "region": int(raw["region"]),
                    "train_loss": float(raw["train_loss"]),
                    "val_loss": float(raw["val_loss"]),
                    "val_accuracy": float(raw["val_accuracy"]),
                    "global_val_accuracy": float(raw["global_val_accuracy"]),
                    "bytes_sent": float(raw["bytes_sent"]),
                    "is_leader": int(raw["is_leader"]),
                }
            )
        return rows


def summarize(raw_by_algorithm: dict[str, list[list[dict]]]) -> list[dict]:
    """Mean and sample std across seeds of per-round metric means.

    Input maps an algorithm label to its per-seed row lists.  Each metric is
    first averaged over devices within a (seed, round), then aggregated
    across seeds; a single seed yields std 0.
    """
    out: list[dict] = []
    for algorithm in sorted(raw_by_algorithm):
        per_seed = raw_by_algorithm[algorithm]
        rounds = sorted({row["fl_round"] for rows in per_seed for row in rows})
        for rnd in rounds:
            for metric in NUMERIC_COLUMNS:
                seed_means = []
                for rows in per_seed:
                    vals = [r[metric] for r in rows if r["fl_round"] == rnd]
                    if vals:
                        seed_means.append(mean(vals))
                if not seed_means:
                    continue
                out.append(
                    {
                        "algorithm": algorithm,
                        "fl_round": rnd,
                        "metric": metric,
                        "mean": mean(seed_means),
                        "std": stdev(seed_means) if len(seed_means) > 1 else 0.0,
                        "n_seeds": len(seed_means),
                    }
                )
    return out


def write_plot_data(path: str | Path, rows: Iterable[dict]) -> None:
    """Long-format plot feed: one row per (algorithm, round, metric)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["algorithm", "fl_round", "metric", "mean", "std", "n_seeds"])
        for r in rows:
            writer.writerow(
                [r["algorithm"], r["fl_round"], r["metric"], repr(r["mean"]), repr(r["std"]), r["n_seeds"]]
            )


def write_summary(path: str | Path, rows: Sequence[dict]) -> None:
    """Wide per-round aggregate: mean/std column pair per metric."""
    header = ["algorithm", "fl_round"]
    for metric in NUMERIC_COLUMNS:
        header += [f"{metric}_mean", f"{metric}_std"]
    cells: dict[tuple[str, int], dict[str, float]] = {}
    for r in rows:
        cells.setdefault((r["algorithm"], r["fl_round"]), {})[r["metric"]] = r
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for (algorithm, rnd) in sorted(cells):
            row = [algorithm, rnd]
            for metric in NUMERIC_COLUMNS:
                entry = cells[(algorithm, rnd)].get(metric)
                row += [repr(entry["mean"]), repr(entry["std"])] if entry else ["", ""]
            writer.writerow(row)
