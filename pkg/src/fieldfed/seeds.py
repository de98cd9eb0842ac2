"""Deterministic 64-bit seed derivation shared by every runner."""

from __future__ import annotations

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


def mix64(*parts: int) -> int:
    """Fold integers into one well-mixed 64-bit seed.

    Order-sensitive, so mix64(a, b) != mix64(b, a); the same arguments always
    yield the same seed across platforms and runs.
    """
    acc = 0x243F6A8885A308D3
    for p in parts:
        acc = _splitmix64(acc ^ (int(p) & _MASK))
    return acc


def device_seed(master: int, device: int) -> int:
    return mix64(master, 0xD0, device)


def train_seed(dev_seed: int, fl_round: int) -> int:
    return mix64(dev_seed, 0x7A, fl_round)
