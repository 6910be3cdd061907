"""Adam/AdamW, learning-rate schedules and global-norm gradient clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_EPS = 1e-8


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              lr: float, betas: tuple[float, float] = DEFAULT_BETAS, eps: float = DEFAULT_EPS,
              weight_decay: float = 0.0, decoupled: bool = False) -> AdamState:
    """Update ``params`` in place.

    ``decoupled=False`` folds weight decay into the gradient (Adam with L2);
    ``decoupled=True`` shrinks the weights directly (AdamW).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    b1, b2 = betas
    state.step += 1
    t = state.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
        if weight_decay and not decoupled:
            g = g + weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay and decoupled:
            p -= lr * weight_decay * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


SCHEDULES = ("none", "cosine", "step")


def lr_schedule(kind: str, base_lr: float, epoch: int, total_epochs: int | None = None,
                interval: int = 10, gamma: float = 0.1) -> float:
    if kind not in SCHEDULES:
        raise ValueError(f"schedule must be one of {SCHEDULES}, got {kind!r}")
    if epoch < 0 or (total_epochs is not None and epoch >= total_epochs):
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    if kind == "none":
        return base_lr
    if kind == "cosine":
        if total_epochs is None:
            raise ValueError("cosine schedule needs total_epochs")
        return base_lr * (1.0 + math.cos(math.pi * epoch / total_epochs)) / 2.0
    if interval < 1:
        raise ValueError("step interval must be >= 1")
    return base_lr * gamma ** (epoch // interval)


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def clip_grad_norm(grads: Sequence[np.ndarray], max_norm: float) -> list[np.ndarray]:
    """Rescale so the global L2 norm is at most ``max_norm``."""
    if not max_norm > 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return list(grads)
    scale = max_norm / norm
    return [g * scale for g in grads]
