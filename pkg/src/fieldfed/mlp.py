"""Minimal feed-forward network over a flat float64 parameter vector.

ReLU hidden layers, softmax cross-entropy output, mini-batch SGD.  Every
operation is a pure function; training never mutates its input parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MlpShape:
    """Layer widths [inputs, hidden..., classes]."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"need >= 2 positive layer sizes, got {sizes}")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def param_count(self) -> int:
        return sum(
            (fan_in + 1) * fan_out
            for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:])
        )


@dataclass(frozen=True)
class ModelParams:
    """All weights of one network as a flat vector."""

    shape: MlpShape
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size != self.shape.param_count:
            raise ValueError(
                f"weight vector of length {w.size} does not fit shape "
                f"{self.shape.layer_sizes} (expected {self.shape.param_count})"
            )
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    seed: int

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError(f"invalid training config: {self}")


def unflatten(params: ModelParams) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split the flat vector into per-layer (W, b); views, not copies."""
    mats = []
    offset = 0
    sizes = params.shape.layer_sizes
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        w = params.weights[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params.weights[offset : offset + fan_out]
        offset += fan_out
        mats.append((w, b))
    return mats


def flatten(shape: MlpShape, layers: list[tuple[np.ndarray, np.ndarray]]) -> ModelParams:
    parts = []
    for w, b in layers:
        parts.append(np.asarray(w, dtype=np.float64).ravel())
        parts.append(np.asarray(b, dtype=np.float64).ravel())
    return ModelParams(shape=shape, weights=np.concatenate(parts))


def init_model(shape: MlpShape, seed: int) -> ModelParams:
    """Deterministic init: weights uniform in +-1/sqrt(fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(shape.layer_sizes, shape.layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        layers.append(
            (rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out))
        )
    return flatten(shape, layers)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def forward_batch(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch of inputs, shape (n, classes)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.shape.n_inputs:
        raise ValueError(
            f"expected inputs of width {params.shape.n_inputs}, got {x.shape}"
        )
    act = x
    layers = unflatten(params)
    for w, b in layers[:-1]:
        act = np.maximum(act @ w + b, 0.0)
    w, b = layers[-1]
    return _softmax(act @ w + b)


def forward(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a single input vector."""
    return forward_batch(params, np.asarray(x, dtype=np.float64)[None, :])[0]


def evaluate(params: ModelParams, features: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(mean cross-entropy, accuracy); argmax ties go to the smallest class."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot evaluate on an empty sample set")
    probs = forward_batch(params, features)
    loss = float(-np.mean(np.log(probs[np.arange(labels.size), labels])))
    accuracy = float(np.mean(np.argmax(probs, axis=1) == labels))
    return loss, accuracy


def grad_batch(params: ModelParams, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Backprop gradient of the mean cross-entropy, as a flat vector."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot take a gradient over an empty batch")
    x = np.asarray(features, dtype=np.float64)
    layers = unflatten(params)

    activations = [x]
    act = x
    for w, b in layers[:-1]:
        act = np.maximum(act @ w + b, 0.0)
        activations.append(act)
    w_last, b_last = layers[-1]
    probs = _softmax(act @ w_last + b_last)

    n = labels.size
    delta = probs
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for idx in range(len(layers) - 1, -1, -1):
        w, _b = layers[idx]
        a_in = activations[idx]
        grads.append((a_in.T @ delta, delta.sum(axis=0)))
        if idx > 0:
            delta = (delta @ w.T) * (activations[idx] > 0.0)
    grads.reverse()
    return flatten(params.shape, grads).weights


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train_local(
    params: ModelParams,
    features: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    *,
    prox_mu: float = 0.0,
    prox_anchor: np.ndarray | None = None,
    control_delta: np.ndarray | None = None,
) -> ModelParams:
    """Mini-batch SGD for cfg.epochs epochs; returns new params.

    The per-epoch shuffle is seeded with cfg.seed ^ epoch, so the whole run
    is reproducible.  prox_mu adds a proximal pull toward prox_anchor;
    control_delta adds a constant correction to every gradient step.  Both
    hooks default to plain SGD and leave its float operations untouched.
    """
    if labels.size == 0:
        raise ValueError("cannot train on an empty shard")
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    w = params.weights.copy()
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(cfg.seed ^ epoch)
        for batch in epoch_batches(y.size, cfg.batch_size, rng):
            cur = ModelParams(shape=params.shape, weights=w)
            g = grad_batch(cur, x[batch], y[batch])
            if prox_mu != 0.0:
                if prox_anchor is None:
                    raise ValueError("prox_mu set but prox_anchor missing")
                g = g + prox_mu * (w - prox_anchor)
            if control_delta is not None:
                g = g + control_delta
            w = w - cfg.learning_rate * g
    return ModelParams(shape=params.shape, weights=w)
