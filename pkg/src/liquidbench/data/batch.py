"""Padded sequence batches and the in-memory dataset container."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from liquidbench.rng import RngStream

TARGET_KINDS = ("class", "binary", "sequence")


@dataclass
class SequenceBatch:
    """``inputs (B, T, D)``, ``delta_t (B, T)``, ``mask (B, T)`` in {0, 1}.

    Padding and masked steps hold zero inputs; padding holds ``delta_t = 1``.
    """

    inputs: np.ndarray
    delta_t: np.ndarray
    mask: np.ndarray
    targets: Any = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.delta_t = np.asarray(self.delta_t, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.float64)
        if self.inputs.ndim != 3:
            raise ValueError(f"inputs must be (B, T, D), got {self.inputs.shape}")
        B, T, _ = self.inputs.shape
        if self.delta_t.shape != (B, T) or self.mask.shape != (B, T):
            raise ValueError(f"delta_t/mask must be {(B, T)}, got {self.delta_t.shape}, {self.mask.shape}")
        if not np.all(np.isfinite(self.inputs)) or not np.all(np.isfinite(self.delta_t)):
            raise ValueError("batch contains non-finite values")

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]

    @property
    def steps(self) -> int:
        return self.inputs.shape[1]

    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1).astype(np.int64)


def collate(xs: Sequence[np.ndarray], dts: Sequence[np.ndarray], targets: Any = None) -> SequenceBatch:
    """Pad variable-length sequences to the longest one."""
    if len(xs) == 0:
        raise ValueError("cannot collate an empty list")
    T = max(len(x) for x in xs)
    D = xs[0].shape[1]
    B = len(xs)
    inputs = np.zeros((B, T, D))
    delta_t = np.ones((B, T))
    mask = np.zeros((B, T))
    for i, (x, dt) in enumerate(zip(xs, dts)):
        n = len(x)
        inputs[i, :n] = x
        delta_t[i, :n] = dt
        mask[i, :n] = 1.0
    return SequenceBatch(inputs, delta_t, mask, targets)


@dataclass
class SequenceDataset:
    """Per-record inputs ``(T_i, D)`` and elapsed times ``(T_i,)`` with targets.

    ``target_kind`` is ``class`` (ids in ``[0, n_classes)``), ``binary``
    (0/1) or ``sequence`` (label lists over ``1..n_classes``, 0 is blank).
    """

    kind: str
    xs: list
    dts: list
    targets: list
    target_kind: str
    n_classes: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.target_kind not in TARGET_KINDS:
            raise ValueError(f"target_kind must be one of {TARGET_KINDS}")
        if not (len(self.xs) == len(self.dts) == len(self.targets)):
            raise ValueError("xs, dts and targets must have equal length")

    def __len__(self) -> int:
        return len(self.xs)

    @property
    def input_dim(self) -> int:
        return self.xs[0].shape[1]

    def subset(self, indices) -> "SequenceDataset":
        idx = [int(i) for i in indices]
        return SequenceDataset(self.kind, [self.xs[i] for i in idx], [self.dts[i] for i in idx],
                               [self.targets[i] for i in idx], self.target_kind, self.n_classes,
                               dict(self.meta))

    def batch(self, indices) -> SequenceBatch:
        idx = [int(i) for i in indices]
        targets = [self.targets[i] for i in idx]
        if self.target_kind != "sequence":
            targets = np.asarray(targets, dtype=np.int64)
        return collate([self.xs[i] for i in idx], [self.dts[i] for i in idx], targets)

    def batches(self, batch_size: int, order=None):
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(order), batch_size):
            yield self.batch(order[start:start + batch_size])

    def split(self, seed: int, fractions=(0.8, 0.1, 0.1)) -> tuple["SequenceDataset", ...]:
        """Deterministic shuffled train/val/test split."""
        perm = RngStream(seed).split("split").permutation(len(self))
        n = len(self)
        cuts = np.floor(np.cumsum(fractions)[:-1] * n).astype(int)
        return tuple(self.subset(part) for part in np.split(perm, cuts))
