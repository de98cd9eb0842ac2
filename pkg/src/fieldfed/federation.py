"""Shared inputs of one federated run: shards, test sets, seeds, init model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .datasets import Dataset, Shard
from .mlp import ModelParams


@dataclass(frozen=True)
class FederationData:
    """Everything a training run consumes besides the topology.

    region_of maps each device to its data region; region_tests holds one
    held-out set per region (same split family as the training partition);
    device_seeds drive per-device, per-round training randomness so distinct
    runners can reproduce identical local updates.
    """

    shards: Mapping[int, Shard]
    region_of: Mapping[int, int]
    region_tests: Mapping[int, Dataset]
    pooled_test: Dataset
    init_params: ModelParams
    device_seeds: Mapping[int, int]
    master_seed: int

    def devices(self) -> list[int]:
        return sorted(self.shards)
