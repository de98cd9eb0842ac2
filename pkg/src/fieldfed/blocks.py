"""Self-stabilizing coordination blocks over the field kernel.

gradient    - self-healing distance estimate to the nearest source
broadcast   - spread a source's value outward along descending potential
collect     - accumulate values up the potential's spanning forest
elect       - sparse multi-leader election by distributed contention
region_step - the elect/collect/decide/broadcast composition

All blocks are pure per-device functions of the NodeContext; potentials use
+inf as the unreachable value, and additions on it saturate naturally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fields import (
    DeviceId,
    FieldValue,
    NodeContext,
    SlotKey,
    neighbor_range,
    neighbor_values,
    rep_evolve,
)

INF = math.inf

NO_PARENT = -1.0
NO_CLAIM = np.array([-1.0, INF])


@dataclass(frozen=True)
class RegionView:
    """A device's view of its region: who leads it and how far the leader is."""

    leader: DeviceId
    is_leader: bool
    potential: float


def gradient(ctx: NodeContext, key: SlotKey, is_source: bool) -> float:
    """Distance to the nearest source, one relaxation per round.

    Sources pin 0; everyone else takes the minimum over neighbors of their
    previous-round potential plus the link length, +inf when no neighbor has
    a finite value.  Self is excluded from the fold, which is what lets the
    estimate rise again after a source disappears.
    """

    def relax(_prev: FieldValue) -> float:
        if is_source:
            return 0.0
        best = INF
        for dev, pot in neighbor_values(ctx, key):
            cand = float(pot) + neighbor_range(ctx, dev)
            if cand < best:
                best = cand
        return best

    return float(rep_evolve(ctx, key, INF, relax))


def _descent_parent(ctx: NodeContext, pot_key: SlotKey) -> tuple[DeviceId | None, float]:
    """Neighbor minimizing (its potential + link length); ties to smallest id."""
    parent: DeviceId | None = None
    best = INF
    for dev, pot in neighbor_values(ctx, pot_key):
        cand = float(pot) + neighbor_range(ctx, dev)
        if cand < best:
            best, parent = cand, dev
    return parent, best


def broadcast(
    ctx: NodeContext,
    value_key: SlotKey,
    pot_key: SlotKey,
    is_source: bool,
    value: FieldValue,
    null: FieldValue,
) -> FieldValue:
    """Each device adopts the value held by its descent parent on the potential.

    Sources emit their own value; devices not (yet) reached by any finite
    potential return `null`.  At fixpoint every device holds the value of the
    source its potential descends from, ties resolved by the parent rule.
    """
    if is_source:
        out = value
    else:
        parent, best = _descent_parent(ctx, pot_key)
        if parent is None or not math.isfinite(best):
            out = null
        else:
            out = ctx.neighbor_exports[parent].slots[value_key]
    return rep_evolve(ctx, value_key, null, lambda _prev: out)


def collect(
    ctx: NodeContext,
    collect_key: SlotKey,
    parent_key: SlotKey,
    pot_key: SlotKey,
    my_potential: float,
    local: FieldValue,
    merge: Callable[[FieldValue, FieldValue], FieldValue],
    null: FieldValue,
) -> FieldValue:
    """Accumulate values toward potential minima along a spanning forest.

    A device's parent is its neighbor with minimal exported potential that is
    strictly below its own (ties to the smallest id); the device merges its
    local value with the accumulated value of every neighbor that named it as
    parent last round.  merge must be associative and commutative.
    """
    parent: DeviceId | None = None
    best = INF
    for dev, pot in neighbor_values(ctx, pot_key):
        pot = float(pot)
        if pot < my_potential and pot < best:
            best, parent = pot, dev
    acc = local
    for dev, chosen in neighbor_values(ctx, parent_key):
        if int(chosen) == ctx.self_id:
            acc = merge(acc, ctx.neighbor_exports[dev].slots[collect_key])
    rep_evolve(
        ctx, parent_key, NO_PARENT,
        lambda _prev: float(parent) if parent is not None else NO_PARENT,
    )
    return rep_evolve(ctx, collect_key, null, lambda _prev: acc)


def elect(ctx: NodeContext, claim_key: SlotKey, radius: float) -> bool:
    """Sparse leader election by contention over relayed claims.

    Every device is a candidate; a claim is (leader id, path distance) and is
    relayed with the link length added, dropped once beyond `radius`.  A
    device yields exactly when it honors a claim from a smaller id; otherwise
    it leads and claims itself at distance 0.  Relayed distances only grow,
    so claims of dead leaders flush out of the network on their own.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    best: tuple[int, float] | None = None
    for dev, claim in neighbor_values(ctx, claim_key):
        lid, dist = int(claim[0]), float(claim[1])
        if lid < 0 or not math.isfinite(dist):
            continue
        extended = dist + neighbor_range(ctx, dev)
        if extended > radius:
            continue
        if best is None or (lid, extended) < best:
            best = (lid, extended)
    if best is None or best[0] >= ctx.self_id:
        is_leader = True
        claim_out = (float(ctx.self_id), 0.0)
    else:
        is_leader = False
        claim_out = (float(best[0]), best[1])
    rep_evolve(ctx, claim_key, NO_CLAIM, lambda _prev: np.array(claim_out))
    return is_leader


@dataclass(frozen=True)
class RegionKeys:
    """Slot keys used by one region_step instance."""

    claim: SlotKey
    potential: SlotKey
    parent: SlotKey
    collected: SlotKey
    decision: SlotKey
    leader: SlotKey

    @classmethod
    def named(cls, prefix: str) -> "RegionKeys":
        return cls(
            claim=SlotKey(f"{prefix}.claim"),
            potential=SlotKey(f"{prefix}.pot"),
            parent=SlotKey(f"{prefix}.parent"),
            collected=SlotKey(f"{prefix}.collect"),
            decision=SlotKey(f"{prefix}.decision"),
            leader=SlotKey(f"{prefix}.leader"),
        )

    def as_set(self) -> frozenset[SlotKey]:
        return frozenset(
            (self.claim, self.potential, self.parent, self.collected,
             self.decision, self.leader)
        )


def region_step(
    ctx: NodeContext,
    keys: RegionKeys,
    radius: float,
    local: FieldValue,
    merge: Callable[[FieldValue, FieldValue], FieldValue],
    decide: Callable[[FieldValue], FieldValue],
    null: FieldValue,
) -> tuple[FieldValue, RegionView]:
    """One round of the leader-centric feedback loop.

    Leaders are elected within `radius`; a potential field forms around them;
    local values flow up to the leader, which applies `decide`; the decision
    flows back down alongside the leader's id.  Returns the broadcast value
    seen by this device plus its RegionView.
    """
    is_leader = elect(ctx, keys.claim, radius)
    potential = gradient(ctx, keys.potential, is_leader)
    collected = collect(
        ctx, keys.collected, keys.parent, keys.potential, potential, local, merge, null
    )
    decision = decide(collected) if is_leader else null
    value = broadcast(ctx, keys.decision, keys.potential, is_leader, decision, null)
    leader_id = broadcast(
        ctx, keys.leader, keys.potential, is_leader, float(ctx.self_id), NO_PARENT
    )
    leader = ctx.self_id if is_leader else int(leader_id)
    view = RegionView(leader=leader, is_leader=is_leader, potential=potential)
    return value, view
