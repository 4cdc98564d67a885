"""Minimal tanh MLPs with hand-written backprop.

Parameters live in flat dicts of arrays keyed "<prefix>W<i>" / "<prefix>b<i>",
so composite models can share one dict and one optimizer.
"""
from __future__ import annotations

import numpy as np


def time_features(t, batch: int) -> np.ndarray:
    """(t, sin 2 pi t, cos 2 pi t) per row, shape (batch, 3)."""
    t = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1), (batch,))
    return np.column_stack([t, np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)])


TIME_FEATURES = 3


def init_mlp(arrays: dict, prefix: str, sizes, rng: np.random.Generator, out_scale: float = 1.0) -> None:
    """Glorot-style init for layers sizes[0] -> ... -> sizes[-1]; last layer scaled by out_scale."""
    n = len(sizes) - 1
    for i in range(n):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        std = np.sqrt(2.0 / (fan_in + fan_out))
        if i == n - 1:
            std *= out_scale
        arrays[f"{prefix}W{i}"] = rng.normal(0.0, std, size=(fan_out, fan_in))
        arrays[f"{prefix}b{i}"] = np.zeros(fan_out)


def n_layers(arrays: dict, prefix: str) -> int:
    n = 0
    while f"{prefix}W{n}" in arrays:
        n += 1
    return n


def mlp_apply(arrays: dict, prefix: str, X: np.ndarray):
    """Forward pass; returns (output, cache). Hidden layers use tanh, output is linear."""
    n = n_layers(arrays, prefix)
    acts = [X]
    h = X
    for i in range(n):
        z = h @ arrays[f"{prefix}W{i}"].T + arrays[f"{prefix}b{i}"]
        h = np.tanh(z) if i < n - 1 else z
        acts.append(h)
    return h, acts


def mlp_backward(arrays: dict, prefix: str, acts, dout: np.ndarray, grads: dict) -> np.ndarray:
    """Accumulate parameter gradients into `grads`; return gradient w.r.t. the input."""
    n = n_layers(arrays, prefix)
    d = dout
    for i in reversed(range(n)):
        if i < n - 1:
            d = d * (1.0 - acts[i + 1] ** 2)
        W = arrays[f"{prefix}W{i}"]
        gW = d.T @ acts[i]
        gb = d.sum(axis=0)
        grads[f"{prefix}W{i}"] = grads.get(f"{prefix}W{i}", 0.0) + gW
        grads[f"{prefix}b{i}"] = grads.get(f"{prefix}b{i}", 0.0) + gb
        d = d @ W
    return d


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


class SGD:
    """SGD with optional heavy-ball momentum and global-norm clipping."""

    def __init__(self, lr: float, momentum: float = 0.9, clip: float | None = 1.0):
        self.lr = lr
        self.momentum = momentum
        self.clip = clip
        self._buf: dict[str, np.ndarray] = {}

    def step(self, arrays: dict, grads: dict) -> None:
        scale = 1.0
        if self.clip is not None:
            norm = global_norm(grads)
            if norm > self.clip:
                scale = self.clip / norm
        for k, g in grads.items():
            g = g * scale
            if self.momentum:
                buf = self._buf.get(k)
                buf = g if buf is None else self.momentum * buf + g
                self._buf[k] = buf
                g = buf
            arrays[k] -= self.lr * g
