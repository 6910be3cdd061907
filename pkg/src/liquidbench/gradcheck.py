"""Central finite-difference checks against the tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from liquidbench.autograd import Tape, Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``; 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom < 1e-12:
        return float(np.linalg.norm(a - n))
    return float(np.linalg.norm(a - n) / denom)


def numeric_grad(fn: Callable[[], float], t: Tensor, h: float = 1e-5) -> np.ndarray:
    flat = t.data.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(t.shape)


def analytic_grads(loss_fn: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss, params=params)
    return [p.grad.copy() for p in params]


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor],
                    h: float = 1e-5) -> float:
    """Worst relative error over ``params`` between tape and finite differences.

    ``loss_fn`` must rebuild the graph from the current parameter values each
    call and return a scalar tensor.
    """
    grads = analytic_grads(loss_fn, params)
    worst = 0.0
    for p, g in zip(params, grads):
        num = numeric_grad(lambda: loss_fn().item(), p, h)
        worst = max(worst, relative_error(g, num))
    return worst
