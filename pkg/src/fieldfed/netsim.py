"""Deterministic round scheduler over a spatial device network.

Topologies are unit-disk graphs on static 2-D positions.  A world snapshot
is stepped one field round at a time: every live device evaluates the
program against its neighbors' previous-round exports, then all new exports
and states are installed atomically.  Failures isolate nodes permanently.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .fields import (
    DeviceId,
    Export,
    FieldProgram,
    FieldValue,
    NodeContext,
    ProgramError,
    SlotKey,
)


@dataclass(frozen=True)
class Topology:
    """Unit-disk graph: an edge joins distinct live devices within comm_range."""

    positions: Mapping[DeviceId, tuple[float, float]]
    comm_range: float
    severed: frozenset[DeviceId] = frozenset()

    @property
    def devices(self) -> tuple[DeviceId, ...]:
        return tuple(sorted(self.positions))

    def live_devices(self) -> tuple[DeviceId, ...]:
        return tuple(d for d in sorted(self.positions) if d not in self.severed)

    def neighbors(self, dev: DeviceId) -> list[DeviceId]:
        if dev in self.severed:
            return []
        p = self.positions[dev]
        out = []
        for other in sorted(self.positions):
            if other == dev or other in self.severed:
                continue
            if math.dist(p, self.positions[other]) <= self.comm_range:
                out.append(other)
        return out

    def distance(self, a: DeviceId, b: DeviceId) -> float:
        return math.dist(self.positions[a], self.positions[b])


def build_unit_disk(
    positions: Mapping[DeviceId, tuple[float, float]], comm_range: float
) -> Topology:
    """Construct a symmetric unit-disk topology from distinct positions."""
    if comm_range <= 0:
        raise ValueError(f"comm_range must be positive, got {comm_range}")
    seen: dict[tuple[float, float], DeviceId] = {}
    for dev, pos in positions.items():
        pos = (float(pos[0]), float(pos[1]))
        if pos in seen:
            raise ValueError(f"devices {seen[pos]} and {dev} share position {pos}")
        seen[pos] = dev
    frozen = {int(d): (float(p[0]), float(p[1])) for d, p in positions.items()}
    return Topology(positions=frozen, comm_range=float(comm_range))


def check_connected(topology: Topology) -> bool:
    """True iff the live-device graph is a single connected component."""
    live = topology.live_devices()
    if len(live) <= 1:
        return True
    seen = {live[0]}
    queue = deque([live[0]])
    while queue:
        cur = queue.popleft()
        for nxt in topology.neighbors(cur):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(live)


def hop_diameter(topology: Topology) -> int:
    """Largest hop-count eccentricity over the live graph (must be connected)."""
    live = topology.live_devices()
    if not check_connected(topology):
        raise ValueError("hop_diameter requires a connected live graph")
    best = 0
    for src in live:
        dist = {src: 0}
        queue = deque([src])
        while queue:
            cur = queue.popleft()
            for nxt in topology.neighbors(cur):
                if nxt not in dist:
                    dist[nxt] = dist[cur] + 1
                    queue.append(nxt)
        best = max(best, max(dist.values()))
    return best


@dataclass(frozen=True)
class ScheduleConfig:
    """Cadence of the field layer relative to federated-learning rounds."""

    field_rounds_per_fl_round: int = 1
    max_fl_rounds: int = 0
    synchronous: bool = True

    def __post_init__(self) -> None:
        if self.field_rounds_per_fl_round < 1:
            raise ValueError("field_rounds_per_fl_round must be >= 1")


@dataclass(frozen=True)
class World:
    """Immutable snapshot of the simulated network.

    `states` and `exports` hold per-device field state; `models` and `shards`
    are the learning-level payload; `sensors` feeds NodeContext.sensors.
    Stepping returns a new snapshot and never mutates the old one.
    """

    topology: Topology
    field_round: int = 0
    fl_round: int = 0
    states: Mapping[DeviceId, Mapping[SlotKey, FieldValue]] = field(default_factory=dict)
    exports: Mapping[DeviceId, Export] = field(default_factory=dict)
    shards: Mapping[DeviceId, object] = field(default_factory=dict)
    models: Mapping[DeviceId, object] = field(default_factory=dict)
    rng_seeds: Mapping[DeviceId, int] = field(default_factory=dict)
    sensors: Mapping[DeviceId, Mapping[str, FieldValue]] = field(default_factory=dict)

    def state_of(self, dev: DeviceId) -> Mapping[SlotKey, FieldValue]:
        return self.states.get(dev, {})


def make_world(topology: Topology, **kwargs) -> World:
    return World(topology=topology, **kwargs)


def step_field_round(world: World, program: FieldProgram) -> World:
    """Advance one field round: every live device evaluates the program.

    Contexts are built from the pre-step snapshot only, so evaluation order
    cannot leak information; devices are run in id order, which by that same
    property equals any parallel schedule.
    """
    topo = world.topology
    new_states: dict[DeviceId, Mapping[SlotKey, FieldValue]] = dict(world.states)
    new_exports: dict[DeviceId, Export] = dict(world.exports)
    for dev in topo.live_devices():
        neighbors = topo.neighbors(dev)
        ctx = NodeContext(
            self_id=dev,
            round=world.field_round,
            position=topo.positions[dev],
            neighbor_exports={
                n: world.exports[n] for n in neighbors if n in world.exports
            },
            prev_state=world.states.get(dev, {}),
            sensors=world.sensors.get(dev, {}),
            neighbor_positions={n: topo.positions[n] for n in neighbors},
            declared=program.slot_keys,
        )
        program(ctx)
        missing = program.slot_keys - ctx.out_slots.keys()
        extra = ctx.out_slots.keys() - program.slot_keys
        if missing or extra:
            raise ProgramError(
                f"device {dev}: export slots do not match declaration "
                f"(missing={sorted(k.name for k in missing)}, "
                f"extra={sorted(k.name for k in extra)})"
            )
        new_states[dev] = dict(ctx.new_state)
        new_exports[dev] = Export(sender=dev, round=world.field_round, slots=dict(ctx.out_slots))
    return replace(
        world,
        field_round=world.field_round + 1,
        states=new_states,
        exports=new_exports,
    )


def inject_failure(world: World, victims: Iterable[DeviceId]) -> World:
    """Sever the victims: their links disappear and their exports stop flowing."""
    victims = frozenset(int(v) for v in victims)
    unknown = victims - set(world.topology.positions)
    if unknown:
        raise ValueError(f"cannot sever unknown devices {sorted(unknown)}")
    if not victims:
        return world
    topo = replace(world.topology, severed=world.topology.severed | victims)
    return replace(world, topology=topo)


def cluster_layout(
    centers: list[tuple[float, float]],
    counts: list[int],
    spread: float,
    seed: int,
) -> dict[DeviceId, tuple[float, float]]:
    """Place devices uniformly in a square of side `spread` around each center.

    Device ids are assigned contiguously cluster by cluster, so cluster k
    owns ids [sum(counts[:k]), sum(counts[:k+1])).
    """
    if len(centers) != len(counts):
        raise ValueError("centers and counts must align")
    rng = np.random.default_rng(seed)
    positions: dict[DeviceId, tuple[float, float]] = {}
    dev = 0
    for (cx, cy), count in zip(centers, counts):
        offsets = rng.uniform(-spread / 2.0, spread / 2.0, size=(count, 2))
        for k in range(count):
            positions[dev] = (cx + float(offsets[k, 0]), cy + float(offsets[k, 1]))
            dev += 1
    return positions


def grid_centers(n: int, gap: float) -> list[tuple[float, float]]:
    """First n points of a near-square grid with the given spacing."""
    cols = math.ceil(math.sqrt(n))
    return [(gap * (i % cols), gap * (i // cols)) for i in range(n)]
