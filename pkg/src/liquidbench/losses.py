"""Training losses: cross-entropy, binary logistic, and CTC.

CTC works in log space on a blank-extended target
``[0, l1, 0, l2, ..., 0]``; index 0 of the vocabulary axis is the blank.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from liquidbench import autograd as ad
from liquidbench.autograd import Tensor

log = logging.getLogger(__name__)

BLANK = 0


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of ``targets`` under ``softmax(logits)``."""
    logits = ad.as_tensor(logits)
    y = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or y.shape != (logits.shape[0],):
        raise ad.DimensionError(f"logits {logits.shape} vs targets {y.shape}")
    k = logits.shape[1]
    if y.size and (y.min() < 0 or y.max() >= k):
        raise ValueError(f"targets must lie in [0, {k})")
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(y)), y] = -1.0 / len(y)
    return (ad.log_softmax(logits, axis=1) * Tensor._wrap(onehot)).sum()


def binary_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean logistic loss ``softplus(z) - y*z`` for ``logits (B, 1)``."""
    logits = ad.as_tensor(logits)
    y = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
    if logits.shape != y.shape:
        raise ad.DimensionError(f"logits {logits.shape} vs targets {y.shape}")
    return (ad.softplus(logits) - logits * Tensor._wrap(y)).mean()


# ---------------------------------------------------------------- CTC

def validate_labels(target: Sequence[int], n_symbols: int | None = None) -> list[int]:
    labels = [int(t) for t in target]
    for t in labels:
        if t == BLANK:
            raise ValueError("target contains the blank id 0")
        if t < 0 or (n_symbols is not None and t >= n_symbols):
            raise ValueError(f"label {t} outside [1, {n_symbols})")
    return labels


def ctc_min_steps(target: Sequence[int]) -> int:
    """Shortest input that can emit ``target``: one step per label plus a
    blank between each pair of equal neighbours."""
    labels = list(target)
    return len(labels) + sum(1 for a, b in zip(labels, labels[1:]) if a == b)


def _shift(v: np.ndarray, k: int) -> np.ndarray:
    """``v`` moved ``k`` places (right for k > 0), filled with -inf."""
    out = np.full_like(v, -np.inf)
    if k > 0:
        out[k:] = v[:-k] if k < len(v) else v[:0]
    else:
        out[:k] = v[-k:] if -k < len(v) else v[:0]
    return out


def ctc_forward_backward(log_probs: np.ndarray, target: Sequence[int]) -> tuple[float, np.ndarray]:
    """Return ``(-log p(target), d loss / d log_probs)`` for one sequence.

    ``log_probs`` is ``(T, C)``. An infeasible pair gives ``(inf, zeros)``.
    """
    lp = np.asarray(log_probs, dtype=np.float64)
    if lp.ndim != 2:
        raise ad.DimensionError(f"log_probs must be (T, C), got {lp.shape}")
    T, C = lp.shape
    labels = validate_labels(target, C)
    grad = np.zeros_like(lp)
    if T == 0 or T < ctc_min_steps(labels):
        return float("inf"), grad

    ext = np.zeros(2 * len(labels) + 1, dtype=np.int64)
    ext[1::2] = labels
    S = len(ext)
    # skip transition s-2 -> s allowed onto a label different from the one two back
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    neg_inf = -np.inf
    emit = lp[:, ext]

    alpha = np.full((T, S), neg_inf)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        a1 = _shift(prev, 1)
        a2 = np.where(skip, _shift(prev, 2), neg_inf)
        alpha[t] = np.logaddexp(np.logaddexp(prev, a1), a2) + emit[t]

    log_p = np.logaddexp(alpha[-1, -1], alpha[-1, -2]) if S > 1 else alpha[-1, -1]
    if not np.isfinite(log_p):
        return float("inf"), grad

    # beta[t, s]: log-prob of finishing from state s at t, excluding step t's emission
    beta = np.full((T, S), neg_inf)
    beta[-1, -1] = 0.0
    if S > 1:
        beta[-1, -2] = 0.0
    skip_from = np.zeros(S, dtype=bool)
    skip_from[:-2] = skip[2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        b1 = _shift(nxt, -1)
        b2 = np.where(skip_from, _shift(nxt, -2), neg_inf)
        beta[t] = np.logaddexp(np.logaddexp(nxt, b1), b2)

    occ = np.exp(alpha + beta - log_p)
    for s in range(S):
        grad[:, ext[s]] -= occ[:, s]
    return float(-log_p), grad


def ctc_loss(log_probs, target: Sequence[int]) -> Tensor:
    """Scalar CTC loss for one ``(T, C)`` sequence, differentiable on the tape."""
    lp = ad.as_tensor(log_probs)
    loss, grad = ctc_forward_backward(lp.data, target)
    return ad.custom_op(np.asarray(loss), (lp,), lambda g: (g * grad,))


def ctc_loss_batch(log_probs: Tensor, targets: Sequence[Sequence[int]], lengths) -> tuple[Tensor, list[int]]:
    """Mean CTC loss over a ``(B, T, C)`` batch using per-row valid lengths.

    Infeasible rows are left out of the mean and returned by index.
    """
    lp = ad.as_tensor(log_probs)
    B, T, C = lp.shape
    lengths = np.asarray(lengths, dtype=np.int64)
    grad = np.zeros_like(lp.data)
    losses, skipped = [], []
    for b in range(B):
        n = int(lengths[b])
        loss, g = ctc_forward_backward(lp.data[b, :n], targets[b])
        if not np.isfinite(loss):
            skipped.append(b)
            continue
        losses.append(loss)
        grad[b, :n] = g
    if skipped:
        log.warning("ctc: %d infeasible sequence(s) excluded from the batch mean: %s",
                    len(skipped), skipped)
    if not losses:
        return ad.custom_op(np.asarray(np.inf), (lp,), lambda g: (np.zeros_like(lp.data),)), skipped
    n_ok = len(losses)
    grad /= n_ok
    return ad.custom_op(np.asarray(sum(losses) / n_ok), (lp,), lambda g: (g * grad,)), skipped


def ctc_greedy_decode(log_probs) -> list[int]:
    """Per-step argmax, collapse repeats, drop blanks."""
    lp = log_probs.data if isinstance(log_probs, Tensor) else np.asarray(log_probs)
    best = np.argmax(lp, axis=-1)
    out, prev = [], None
    for c in best:
        c = int(c)
        if c != prev and c != BLANK:
            out.append(c)
        prev = c
    return out
