"""Dataset loading, synthetic generation, and region-level partitioning.

IDX files (optionally gzipped) are parsed into flat float64 feature matrices
with pixel values scaled to [0, 1].  Partitioners split a dataset into
region datasets exactly (multiset-preserving); device shards are then drawn
without replacement inside each region, so no two devices share a sample.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .seeds import mix64

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


class IdxFormatError(ValueError):
    """Malformed IDX input; the message carries the failing byte offset."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n, m) in [0,1]-ish scale plus integer labels (n,)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        f = np.asarray(self.features, dtype=np.float64)
        l = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2 or l.ndim != 1 or f.shape[0] != l.shape[0]:
            raise ValueError(f"inconsistent dataset shapes {f.shape} / {l.shape}")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", l)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx])

    def label_marginal(self, n_classes: int) -> np.ndarray:
        counts = np.bincount(self.labels, minlength=n_classes).astype(np.float64)
        return counts / counts.sum()


@dataclass(frozen=True)
class Shard:
    """One device's private slice of a region dataset."""

    owner: int
    data: Dataset

    @property
    def n_samples(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class RegionSpec:
    """Which devices belong to one region."""

    region_id: int
    member_devices: tuple[int, ...]


def _open_maybe_gzip(path: str) -> BinaryIO:
    with open(path, "rb") as probe:
        head = probe.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_be32(stream: BinaryIO, offset: int, what: str) -> tuple[int, int]:
    raw = stream.read(4)
    if len(raw) != 4:
        raise IdxFormatError(f"truncated {what} at offset {offset}")
    return struct.unpack(">i", raw)[0], offset + 4


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Parse a big-endian IDX image/label file pair.

    Images use magic 2051 with rows x cols flattened to one feature vector
    per sample and pixels scaled by 1/255; labels use magic 2049.  The two
    files must agree on the sample count.
    """
    with _open_maybe_gzip(images_path) as f:
        off = 0
        magic, off = _read_be32(f, off, "image header")
        if magic != IMAGE_MAGIC:
            raise IdxFormatError(
                f"bad image magic {magic} at offset 0 (expected {IMAGE_MAGIC})"
            )
        count, off = _read_be32(f, off, "image count")
        rows, off = _read_be32(f, off, "row count")
        cols, off = _read_be32(f, off, "column count")
        body = f.read(count * rows * cols + 1)
        if len(body) < count * rows * cols:
            raise IdxFormatError(
                f"image data truncated at offset {off + len(body)} "
                f"(expected {count * rows * cols} pixel bytes)"
            )
        if len(body) > count * rows * cols:
            raise IdxFormatError(f"trailing bytes after pixel data at offset {off}")
        pixels = np.frombuffer(body, dtype=np.uint8).reshape(count, rows * cols)

    with _open_maybe_gzip(labels_path) as f:
        off = 0
        magic, off = _read_be32(f, off, "label header")
        if magic != LABEL_MAGIC:
            raise IdxFormatError(
                f"bad label magic {magic} at offset 0 (expected {LABEL_MAGIC})"
            )
        n_labels, off = _read_be32(f, off, "label count")
        body = f.read(n_labels + 1)
        if len(body) < n_labels:
            raise IdxFormatError(
                f"label data truncated at offset {off + len(body)}"
            )
        if len(body) > n_labels:
            raise IdxFormatError(f"trailing bytes after label data at offset {off}")
        labels = np.frombuffer(body, dtype=np.uint8)

    if n_labels != count:
        raise IdxFormatError(
            f"count mismatch: {count} images vs {n_labels} labels"
        )
    return Dataset(pixels.astype(np.float64) / 255.0, labels.astype(np.int64))


def synth_dataset(
    classes: int,
    per_class: int,
    m: int,
    seed: int,
    separation: float = 3.0,
) -> Dataset:
    """Gaussian blobs with one mean per class on scaled unit axes.

    Class c is centered at separation * e_c, so all pairwise mean distances
    equal separation * sqrt(2) against unit noise.  Deterministic in seed.
    """
    if classes <= 0 or per_class <= 0 or m <= 0:
        raise ValueError("classes, per_class and m must be positive")
    if m < classes:
        raise ValueError(f"need m >= classes to place {classes} blob means in R^{m}")
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((classes * per_class, m))
    labels = np.repeat(np.arange(classes), per_class)
    for c in range(classes):
        features[labels == c, c] += separation
    order = rng.permutation(labels.size)
    return Dataset(features[order], labels[order])


def _largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to total, closest to proportions * total."""
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        remainders = raw - counts
        # stable tie-break: larger remainder first, then lower index
        order = np.lexsort((np.arange(len(raw)), -remainders))
        counts[order[:short]] += 1
    return counts


def partition_iid(dataset: Dataset, regions: int, seed: int) -> list[Dataset]:
    """Shuffle and split into near-equal region datasets."""
    if regions < 1:
        raise ValueError("regions must be >= 1")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    chunks = np.array_split(order, regions)
    return [dataset.subset(chunk) for chunk in chunks]


def partition_dirichlet(dataset: Dataset, regions: int, alpha: float, seed: int) -> list[Dataset]:
    """Split each class across regions with Dirichlet(alpha) proportions.

    Counts are rounded with the largest-remainder rule so the region
    datasets partition the input exactly.
    """
    if regions < 1:
        raise ValueError("regions must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    rng = np.random.default_rng(seed)
    per_region: list[list[np.ndarray]] = [[] for _ in range(regions)]
    for c in np.unique(dataset.labels):
        idx = np.flatnonzero(dataset.labels == c)
        idx = rng.permutation(idx)
        proportions = rng.dirichlet(np.full(regions, alpha))
        counts = _largest_remainder(proportions, idx.size)
        start = 0
        for r in range(regions):
            per_region[r].append(idx[start : start + counts[r]])
            start += counts[r]
    out = []
    for r in range(regions):
        merged = np.concatenate(per_region[r]) if per_region[r] else np.array([], dtype=np.int64)
        out.append(dataset.subset(np.sort(merged)))
    return out


def partition_hard(dataset: Dataset, regions: int, seed: int) -> list[Dataset]:
    """Give each region a contiguous pool of classes and all their samples."""
    n_classes = int(dataset.labels.max()) + 1
    if regions > n_classes:
        raise ValueError(
            f"hard partition needs regions <= classes, got {regions} > {n_classes}"
        )
    pools = hard_label_pools(n_classes, regions)
    rng = np.random.default_rng(seed)
    out = []
    for pool in pools:
        idx = np.flatnonzero(np.isin(dataset.labels, pool))
        out.append(dataset.subset(rng.permutation(idx)))
    return out


def hard_label_pools(n_classes: int, regions: int) -> list[tuple[int, ...]]:
    """Contiguous, maximally even class pools; earlier pools take remainders."""
    base, extra = divmod(n_classes, regions)
    pools = []
    start = 0
    for r in range(regions):
        size = base + (1 if r < extra else 0)
        pools.append(tuple(range(start, start + size)))
        start += size
    return pools


def assign_devices(
    region_datasets: Sequence[Dataset],
    regions: Sequence[RegionSpec],
    samples_per_device: int,
    seed: int,
) -> dict[int, Shard]:
    """Draw each device's shard without replacement from its region dataset."""
    shards: dict[int, Shard] = {}
    for spec in regions:
        data = region_datasets[spec.region_id]
        members = sorted(spec.member_devices)
        need = samples_per_device * len(members)
        if need > len(data):
            raise ValueError(
                f"region {spec.region_id} holds {len(data)} samples but its "
                f"{len(members)} devices need {need}"
            )
        rng = np.random.default_rng(mix64(seed, 0x5A, spec.region_id))
        order = rng.permutation(len(data))
        for k, dev in enumerate(members):
            take = order[k * samples_per_device : (k + 1) * samples_per_device]
            shards[dev] = Shard(owner=dev, data=data.subset(take))
    return shards


def label_tv_distance(a: Dataset | Shard, b: Dataset | Shard) -> float:
    """Total variation distance between empirical label marginals."""
    da = a.data if isinstance(a, Shard) else a
    db = b.data if isinstance(b, Shard) else b
    if len(da) == 0 or len(db) == 0:
        raise ValueError("label distributions need at least one sample")
    n_classes = int(max(da.labels.max(), db.labels.max())) + 1
    pa = da.label_marginal(n_classes)
    pb = db.label_marginal(n_classes)
    return float(0.5 * np.abs(pa - pb).sum())
