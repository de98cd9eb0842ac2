"""Centralized federated baselines: weighted averaging, proximal local
objectives, and control-variate corrected local steps.

These runners double as oracles for the field-coordinated protocol, so their
aggregation arithmetic is kept independent of the regional module's.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .federation import FederationData
from .metrics import MetricsRecord, device_record
from .mlp import (
    ModelParams,
    TrainConfig,
    epoch_batches,
    grad_batch,
    train_local,
)
from .seeds import train_seed

ALGORITHMS = ("fedavg", "fedprox", "scaffold")


@dataclass
class ServerState:
    """Server side of a centralized run; the control vector is scaffold-only."""

    global_model: ModelParams
    control: np.ndarray
    round: int = 0
    global_lr: float = 1.0


@dataclass
class ClientState:
    device: int
    control: np.ndarray


@dataclass(frozen=True)
class CentralConfig:
    rounds: int
    epochs: int
    batch_size: int
    learning_rate: float
    mu: float = 0.1
    global_lr: float = 1.0
    scaffold_option: int = 2

    def __post_init__(self) -> None:
        if self.rounds < 0 or self.epochs < 0:
            raise ValueError("rounds and epochs must be non-negative")
        if self.scaffold_option not in (1, 2):
            raise ValueError(f"scaffold_option must be 1 or 2, got {self.scaffold_option}")


def fedavg_aggregate(entries: Sequence[tuple[ModelParams, int]]) -> ModelParams:
    """Data-size weighted average: sum(n_k * w_k) / sum(n_k), coordinatewise."""
    if not entries:
        raise ValueError("cannot aggregate an empty model set")
    shape = entries[0][0].shape
    total = 0
    acc = np.zeros(shape.param_count)
    for params, n in entries:
        if params.shape != shape:
            raise ValueError(f"model shape mismatch: {params.shape} vs {shape}")
        if n <= 0:
            raise ValueError(f"sample counts must be positive, got {n}")
        acc += n * params.weights
        total += n
    return ModelParams(shape=shape, weights=acc / total)


def fedprox_grad(
    params: ModelParams,
    round_start: ModelParams,
    features: np.ndarray,
    labels: np.ndarray,
    mu: float,
) -> np.ndarray:
    """Gradient of the proximalized objective F + (mu/2)||w - w_start||^2."""
    if mu < 0:
        raise ValueError("mu must be non-negative")
    g = grad_batch(params, features, labels)
    if mu == 0.0:
        return g
    return g + mu * (params.weights - round_start.weights)


def scaffold_local_step(
    y: np.ndarray,
    batch,
    c: np.ndarray,
    c_i: np.ndarray,
    eta_l: float,
    grad_fn: Callable[[np.ndarray, object], np.ndarray],
) -> np.ndarray:
    """One corrected local update: y - eta_l * (grad_fn(y, batch) + c - c_i)."""
    return y - eta_l * (grad_fn(y, batch) + c - c_i)


def scaffold_client_control_update(
    c_i: np.ndarray, x: np.ndarray, y_i: np.ndarray, k: int, eta_l: float
) -> np.ndarray:
    """Control refresh from the realized drift: c_i - (x - y_i) / (k * eta_l)."""
    if k < 1 or eta_l <= 0:
        raise ValueError("need k >= 1 and eta_l > 0")
    return c_i - (x - y_i) / (k * eta_l)


def scaffold_server_update(
    x: np.ndarray,
    c: np.ndarray,
    client_results: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]],
    eta_g: float,
    n_clients: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Server model and control step from (y_i, c_i_new, c_i_old) triples."""
    if not client_results:
        raise ValueError("scaffold server update needs at least one client")
    y_mean = np.mean([y for y, _, _ in client_results], axis=0)
    x_new = x + eta_g * (y_mean - x)
    delta = np.zeros_like(c)
    for _, c_new, c_old in client_results:
        delta += c_new - c_old
    return x_new, c + delta / n_clients


def _mlp_grad_fn(shape) -> Callable[[np.ndarray, tuple], np.ndarray]:
    def grad_fn(y: np.ndarray, batch: tuple) -> np.ndarray:
        feats, labels = batch
        return grad_batch(ModelParams(shape=shape, weights=y), feats, labels)

    return grad_fn


def _scaffold_client_round(
    x: ModelParams,
    shard_features: np.ndarray,
    shard_labels: np.ndarray,
    cfg: CentralConfig,
    seed: int,
    c: np.ndarray,
    c_i: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Local corrected SGD from the server model; returns (y, c_i_new, steps)."""
    grad_fn = _mlp_grad_fn(x.shape)
    y = x.weights.copy()
    steps = 0
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(seed ^ epoch)
        for batch in epoch_batches(shard_labels.size, cfg.batch_size, rng):
            y = scaffold_local_step(
                y, (shard_features[batch], shard_labels[batch]), c, c_i,
                cfg.learning_rate, grad_fn,
            )
            steps += 1
    if steps == 0:
        return y, c_i.copy(), 0
    if cfg.scaffold_option == 1:
        c_i_new = grad_batch(x, shard_features, shard_labels)
    else:
        c_i_new = scaffold_client_control_update(
            c_i, x.weights, y, steps, cfg.learning_rate
        )
    return y, c_i_new, steps


def run_centralized(
    algorithm: str, fed: FederationData, cfg: CentralConfig
) -> list[MetricsRecord]:
    """Full-participation rounds of distribute / local train / aggregate.

    Every device trains each round; per-device seeds are derived from the
    federation's seed table so identically-configured runs reproduce exactly.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown centralized algorithm {algorithm!r}")
    devices = fed.devices()
    p = fed.init_params.shape.param_count
    server = ServerState(
        global_model=fed.init_params,
        control=np.zeros(p),
        global_lr=cfg.global_lr,
    )
    clients = {d: ClientState(device=d, control=np.zeros(p)) for d in devices}
    records: list[MetricsRecord] = []

    for t in range(cfg.rounds):
        x = server.global_model
        if algorithm == "scaffold":
            results = []
            for d in devices:
                shard = fed.shards[d]
                y, c_i_new, steps = _scaffold_client_round(
                    x,
                    shard.data.features,
                    shard.data.labels,
                    cfg,
                    train_seed(fed.device_seeds[d], t),
                    server.control,
                    clients[d].control,
                )
                results.append((y, c_i_new, clients[d].control.copy()))
                clients[d].control = c_i_new
            x_new, c_new = scaffold_server_update(
                x.weights, server.control, results, cfg.global_lr, len(devices)
            )
            server.control = c_new
            server.global_model = ModelParams(shape=x.shape, weights=x_new)
        else:
            trained: list[tuple[ModelParams, int]] = []
            for d in devices:
                shard = fed.shards[d]
                tcfg = TrainConfig(
                    epochs=cfg.epochs,
                    batch_size=cfg.batch_size,
                    learning_rate=cfg.learning_rate,
                    seed=train_seed(fed.device_seeds[d], t),
                )
                if algorithm == "fedprox" and cfg.mu != 0.0:
                    w = train_local(
                        x, shard.data.features, shard.data.labels, tcfg,
                        prox_mu=cfg.mu, prox_anchor=x.weights,
                    )
                else:
                    w = train_local(x, shard.data.features, shard.data.labels, tcfg)
                trained.append((w, shard.n_samples))
            server.global_model = fedavg_aggregate(trained)
        server.round = t + 1

        model = server.global_model
        for d in devices:
            records.append(
                device_record(
                    seed=fed.master_seed,
                    fl_round=t,
                    device=d,
                    region=-1,
                    is_leader=False,
                    model=model,
                    shard=fed.shards[d],
                    region_test=fed.region_tests[fed.region_of[d]],
                    pooled_test=fed.pooled_test,
                    bytes_sent=2 * p * 8,
                )
            )
    return records
