"""Field-coordinated regional federated learning.

Leaders are elected in space, a potential field forms around each one, local
model updates flow up the field's spanning forest, the leader aggregates a
regional model, and the result flows back down.  One learning round spans a
window of field rounds long enough for the whole pipeline to complete, so at
steady state a single-region run reproduces centralized weighted averaging
round for round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping

import numpy as np

from .blocks import RegionKeys, region_step
from .federation import FederationData
from .fields import (
    EMPTY_BUNDLE,
    Bundle,
    BundleEntry,
    DeviceId,
    FieldProgram,
    NodeContext,
    SlotKey,
    put_state,
)
from .metrics import MetricsRecord, device_record
from .mlp import ModelParams, TrainConfig, train_local
from .netsim import World, check_connected, hop_diameter, inject_failure, step_field_round
from .seeds import mix64, train_seed

IS_LEADER = SlotKey("fl.state.is_leader")

KEYS = RegionKeys.named("fl")


@dataclass(frozen=True)
class FailureSpec:
    """Sever `victims` current leaders at the given round boundary."""

    fl_round: int
    victims: int


@dataclass(frozen=True)
class RegionalRunConfig:
    radius: float
    rounds: int
    epochs: int
    batch_size: int
    learning_rate: float
    field_ratio: int | None = None  # None: 2 * (hop diameter + 1)
    warmup_rounds: int | None = None  # None: same as field_ratio
    failure: FailureSpec | None = None

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.field_ratio is not None and self.field_ratio < 1:
            raise ValueError("field_ratio must be >= 1")


def leader_assignment(
    device: DeviceId,
    leaders: set[DeviceId],
    dist: Callable[[DeviceId, DeviceId], float],
    radius: float,
) -> DeviceId:
    """Nearest leader within radius, ties to smallest id; self when none."""
    best: tuple[float, int] | None = None
    for l in sorted(leaders):
        d = dist(device, l)
        if d <= radius and (best is None or (d, l) < best):
            best = (d, l)
    return device if best is None else best[1]


def aggregate_bundle(bundle: Bundle) -> BundleEntry:
    """Collapse a bundle into one data-size weighted entry.

    Weights are alpha_d = n_d / sum(n); entries are combined in device-id
    order.  The stamp of the result is the oldest stamp aggregated, so a
    consumer can tell how fresh the regional model is.
    """
    if not bundle:
        raise ValueError("cannot aggregate an empty bundle")
    total = sum(e.n_samples for e in bundle.entries)
    acc = np.zeros_like(bundle.entries[0].weights)
    for e in bundle.entries:
        acc += (e.n_samples / total) * e.weights
    return BundleEntry(
        device=-1,
        weights=acc,
        n_samples=total,
        stamp=min(e.stamp for e in bundle.entries),
    )


def regional_aggregate(leader_model: ModelParams, bundle: Bundle) -> ModelParams:
    """Regional weighted average over the collected bundle.

    The leader participates only through its own trained entry inside the
    bundle; its previous regional model just supplies the parameter shape.
    """
    entry = aggregate_bundle(bundle)
    return ModelParams(shape=leader_model.shape, weights=entry.weights)


class RegionalProgram(FieldProgram):
    """Per-device field program: elect, collect, aggregate, disseminate.

    `contributions` maps each device to its latest trained model entry; the
    runner refreshes it at every learning-round boundary.  Everything else is
    derived from the context, so a round stays a pure function of the world.
    """

    def __init__(self, radius: float, contributions: dict[DeviceId, BundleEntry]):
        self.radius = radius
        self.contributions = contributions
        self.keys = KEYS
        self.slot_keys = self.keys.as_set()

    def __call__(self, ctx: NodeContext) -> None:
        local = Bundle([self.contributions[ctx.self_id]])

        def decide(collected: Bundle) -> Bundle:
            merged = aggregate_bundle(collected)
            return Bundle([replace_entry_device(merged, ctx.self_id)])

        _value, view = region_step(
            ctx,
            self.keys,
            self.radius,
            local,
            merge=lambda a, b: a.merge_latest(b),
            decide=decide,
            null=EMPTY_BUNDLE,
        )
        put_state(ctx, IS_LEADER, view.is_leader)


def replace_entry_device(entry: BundleEntry, device: DeviceId) -> BundleEntry:
    return BundleEntry(
        device=device, weights=entry.weights, n_samples=entry.n_samples, stamp=entry.stamp
    )


def _bundle_payload(export_slots: Mapping[SlotKey, object]) -> int:
    models = 0
    for key in (KEYS.collected, KEYS.decision):
        value = export_slots.get(key)
        if isinstance(value, Bundle):
            models += len(value)
    return models


def run_regional(
    world: World, fed: FederationData, cfg: RegionalRunConfig
) -> tuple[World, list[MetricsRecord]]:
    """Run the full regional learning loop on a simulated world.

    Per learning round: refresh every live device's contribution by local
    training, run one field window so collection, aggregation and
    dissemination complete, then let each device adopt the regional model it
    received (falling back to its own trained model while isolated).
    """
    if not check_connected(world.topology):
        raise ValueError("initial topology must be connected")
    diameter = hop_diameter(world.topology)
    ratio = cfg.field_ratio if cfg.field_ratio is not None else 2 * (diameter + 1)
    warmup = cfg.warmup_rounds if cfg.warmup_rounds is not None else ratio

    shape = fed.init_params.shape
    p = shape.param_count
    contributions = {
        d: BundleEntry(
            device=d,
            weights=fed.init_params.weights,
            n_samples=fed.shards[d].n_samples,
            stamp=-1,
        )
        for d in world.topology.live_devices()
    }
    program = RegionalProgram(radius=cfg.radius, contributions=contributions)
    world = replace(
        world, models={d: fed.init_params for d in world.topology.live_devices()}
    )

    for _ in range(warmup):
        world = step_field_round(world, program)

    records: list[MetricsRecord] = []
    for t in range(cfg.rounds):
        if cfg.failure is not None and t == cfg.failure.fl_round:
            world = _kill_leaders(world, fed, cfg.failure.victims)
        live = world.topology.live_devices()

        for d in live:
            tcfg = TrainConfig(
                epochs=cfg.epochs,
                batch_size=cfg.batch_size,
                learning_rate=cfg.learning_rate,
                seed=train_seed(fed.device_seeds[d], t),
            )
            shard = fed.shards[d]
            trained = train_local(
                world.models[d], shard.data.features, shard.data.labels, tcfg
            )
            contributions[d] = BundleEntry(
                device=d, weights=trained.weights, n_samples=shard.n_samples, stamp=t
            )

        bytes_sent = {d: 0 for d in live}
        for _ in range(ratio):
            world = step_field_round(world, program)
            for d in world.topology.live_devices():
                degree = len(world.topology.neighbors(d))
                bytes_sent[d] += _bundle_payload(world.exports[d].slots) * p * 8 * degree

        new_models = dict(world.models)
        for d in live:
            state = world.state_of(d)
            decision = state.get(KEYS.decision, EMPTY_BUNDLE)
            if decision:
                entry = decision.entries[0]
                new_models[d] = ModelParams(shape=shape, weights=entry.weights)
                region = entry.device
            else:
                new_models[d] = ModelParams(shape=shape, weights=contributions[d].weights)
                region = d
            records.append(
                device_record(
                    seed=fed.master_seed,
                    fl_round=t,
                    device=d,
                    region=region,
                    is_leader=bool(state.get(IS_LEADER, False)),
                    model=new_models[d],
                    shard=fed.shards[d],
                    region_test=fed.region_tests[fed.region_of[d]],
                    pooled_test=fed.pooled_test,
                    bytes_sent=bytes_sent[d],
                )
            )
        world = replace(world, models=new_models, fl_round=t + 1)
    return world, records


def current_leaders(world: World) -> list[DeviceId]:
    return [
        d
        for d in world.topology.live_devices()
        if bool(world.state_of(d).get(IS_LEADER, False))
    ]


def _kill_leaders(world: World, fed: FederationData, n_victims: int) -> World:
    leaders = current_leaders(world)
    if n_victims > len(leaders):
        raise ValueError(
            f"cannot sever {n_victims} leaders; only {len(leaders)} are elected"
        )
    rng = np.random.default_rng(mix64(fed.master_seed, 0xFA11))
    victims = rng.choice(np.array(sorted(leaders)), size=n_victims, replace=False)
    return inject_failure(world, (int(v) for v in victims))
