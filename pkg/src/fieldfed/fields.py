"""Round-based field coordination kernel.

Each device runs a sense-compute-act cycle: in one round it sees its own
previous state plus the most recent export of every current neighbor,
computes new slot values, and publishes exactly one export holding all of
the program's declared slots.  Alignment is static: every construct instance
owns a distinct SlotKey fixed at program definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Union

import numpy as np

DeviceId = int


class ProgramError(Exception):
    """Raised for program-definition mistakes (undeclared or missing slots)."""


class NeighborLookupError(KeyError):
    """Raised when a device is asked about a node that is not a neighbor."""


@dataclass(frozen=True, order=True)
class SlotKey:
    """Names one field-construct instance within a program."""

    name: str


@dataclass(frozen=True)
class BundleEntry:
    """One device's model contribution: flat weights, sample count, round stamp."""

    device: DeviceId
    weights: np.ndarray
    n_samples: int
    stamp: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BundleEntry):
            return NotImplemented
        return (
            self.device == other.device
            and self.n_samples == other.n_samples
            and self.stamp == other.stamp
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self) -> int:
        return hash((self.device, self.n_samples, self.stamp))


class Bundle:
    """Immutable set of model contributions keyed by device id.

    Merging keeps, per device, the entry with the largest round stamp, which
    bounds staleness during transients to the freshest value seen.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: Iterable[BundleEntry] = ()):
        by_dev: dict[DeviceId, BundleEntry] = {}
        for e in entries:
            cur = by_dev.get(e.device)
            if cur is None or e.stamp > cur.stamp:
                by_dev[e.device] = e
        self._entries = tuple(by_dev[d] for d in sorted(by_dev))

    @property
    def entries(self) -> tuple[BundleEntry, ...]:
        return self._entries

    def devices(self) -> tuple[DeviceId, ...]:
        return tuple(e.device for e in self._entries)

    def merge_latest(self, other: "Bundle") -> "Bundle":
        return Bundle(self._entries + other._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __bool__(self) -> bool:
        return bool(self._entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Bundle):
            return NotImplemented
        return self._entries == other._entries

    def __repr__(self) -> str:
        return f"Bundle({[e.device for e in self._entries]})"


EMPTY_BUNDLE = Bundle()

FieldValue = Union[float, int, bool, np.ndarray, Bundle]


@dataclass(frozen=True)
class Export:
    """A device's per-round coordination message."""

    sender: DeviceId
    round: int
    slots: Mapping[SlotKey, FieldValue]


@dataclass
class NodeContext:
    """Everything one device can see while evaluating a round.

    neighbor_exports holds the most recent export of each current neighbor;
    prev_state holds this device's own previous-round slot values.  The two
    trailing dicts accumulate this round's outputs and are filled by the
    kernel operations below.
    """

    self_id: DeviceId
    round: int
    position: tuple[float, float]
    neighbor_exports: Mapping[DeviceId, Export]
    prev_state: Mapping[SlotKey, FieldValue]
    sensors: Mapping[str, FieldValue]
    neighbor_positions: Mapping[DeviceId, tuple[float, float]]
    declared: frozenset[SlotKey]
    new_state: dict[SlotKey, FieldValue] = field(default_factory=dict)
    out_slots: dict[SlotKey, FieldValue] = field(default_factory=dict)


def _check_declared(ctx: NodeContext, key: SlotKey) -> None:
    if key not in ctx.declared:
        raise ProgramError(f"slot {key.name!r} is not declared by the program")


def _value_kind(v: FieldValue) -> str:
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, (int, float)):
        return "scalar"
    if isinstance(v, np.ndarray):
        return "vector"
    if isinstance(v, Bundle):
        return "bundle"
    raise TypeError(f"{type(v).__name__} is not a field value")


def neighbor_values(ctx: NodeContext, key: SlotKey) -> list[tuple[DeviceId, FieldValue]]:
    """Neighbor slot values from the previous round, ordered by device id."""
    out = []
    for dev in sorted(ctx.neighbor_exports):
        exp = ctx.neighbor_exports[dev]
        if key not in exp.slots:
            raise ProgramError(f"neighbor {dev} export lacks slot {key.name!r}")
        out.append((dev, exp.slots[key]))
    return out


def put_state(ctx: NodeContext, key: SlotKey, value: FieldValue) -> FieldValue:
    """Record a state-only value (not exported) for the next round."""
    ctx.new_state[key] = value
    return value


def rep_evolve(
    ctx: NodeContext,
    key: SlotKey,
    init: FieldValue,
    evolve: Callable[[FieldValue], FieldValue],
) -> FieldValue:
    """Evolve a persistent field value: evolve(previous or init).

    The evolved value is recorded into this round's state and shared in this
    round's export, so neighbors observe it with a one-round delay.
    """
    _check_declared(ctx, key)
    prev = ctx.prev_state.get(key, init)
    value = evolve(prev)
    ctx.new_state[key] = value
    ctx.out_slots[key] = value
    return value


def nbr_fold(
    ctx: NodeContext,
    key: SlotKey,
    init: FieldValue,
    combine: Callable[[FieldValue, FieldValue], FieldValue],
    local: FieldValue,
) -> FieldValue:
    """Fold neighbors' previous-round values under key, excluding self.

    `local` is simultaneously placed into this round's outgoing export under
    the same key (the bidirectional exchange contract).  The fold visits
    neighbors in device-id order so results are deterministic.
    """
    _check_declared(ctx, key)
    ctx.out_slots[key] = local
    acc = init
    want = _value_kind(local)
    for _, value in neighbor_values(ctx, key):
        if _value_kind(value) != want:
            raise TypeError(
                f"slot {key.name!r}: neighbor value kind {_value_kind(value)} "
                f"does not match local kind {want}"
            )
        acc = combine(acc, value)
    return acc


def neighbor_range(ctx: NodeContext, other: DeviceId) -> float:
    """Euclidean distance from self to a current neighbor."""
    if other not in ctx.neighbor_positions:
        raise NeighborLookupError(f"device {other} is not a neighbor of {ctx.self_id}")
    return math.dist(ctx.position, ctx.neighbor_positions[other])


class FieldProgram:
    """Base for per-device round programs.

    Subclasses set `slot_keys` (the exported slots; the export-completeness
    contract) and implement `__call__(ctx)`.  Programs must write every
    declared slot every round.
    """

    slot_keys: frozenset[SlotKey] = frozenset()

    def __call__(self, ctx: NodeContext) -> None:
        raise NotImplementedError
