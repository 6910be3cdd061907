"""Dense float64 tensors with reverse-mode differentiation over a tape.

Operations record themselves on the innermost active :class:`Tape` whenever
one of their inputs is a parameter (``requires_grad=True``) or the output of
an earlier recorded operation. Outside a tape every operation is a plain
numpy evaluation, which is what inference uses.

Binary operations accept operands of identical shape, a scalar operand, or a
1-D operand matching the trailing axis of the other. Anything else raises
:class:`DimensionError`; callers broadcast constants explicitly.

Example::

    w = Tensor([[1.0, 2.0]], requires_grad=True)
    with Tape() as tape:
        loss = (w @ Tensor([[3.0], [4.0]])).sum()
        tape.backward(loss)
    w.grad  # [[3., 4.]]
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class TapeError(RuntimeError):
    """Misuse of a tape: non-scalar root, replay, foreign root."""


_local = threading.local()


def _stack() -> list:
    st = getattr(_local, "stack", None)
    if st is None:
        st = _local.stack = []
    return st


def active_tape() -> "Tape | None":
    st = _stack()
    return st[-1] if st else None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node_id", "_tape", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor data must be finite")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id: int | None = None
        self._tape: Tape | None = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = False
        t.node_id = None
        t._tape = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return reduce_sum(self, axis)

    def mean(self, axis=None):
        return reduce_mean(self, axis)

    def max(self, axis=None):
        return reduce_max(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class _Scatter:
    """Sparse gradient: ``value`` lands at ``index`` of a zero array."""

    __slots__ = ("index", "value")

    def __init__(self, index, value):
        self.index = index
        self.value = value


class Tape:
    """Single-use record of a forward pass.

    Use as a context manager; ``backward`` may be called once. Gradients are
    added to ``.grad`` of every leaf parameter the root depends on; leaves in
    ``params`` that the root does not reach get a zero gradient.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple, Callable]] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        st = _stack()
        if st and st[-1] is self:
            st.pop()
        elif self in st:
            st.remove(self)

    def __len__(self) -> int:
        return len(self._nodes)

    def reset(self) -> None:
        self._nodes = []
        self.consumed = False

    def record(self, out: Tensor, inputs: tuple, backward: Callable) -> None:
        if self.consumed:
            raise TapeError("tape already consumed; reset it before recording")
        out.node_id = len(self._nodes)
        out._tape = self
        self._nodes.append((out, inputs, backward))

    def tracks(self, t: Tensor) -> bool:
        return t.requires_grad or t._tape is self

    def backward(self, root: Tensor, params: Sequence[Tensor] | None = None) -> None:
        if self.consumed:
            raise TapeError("tape already consumed")
        if root.data.size != 1:
            raise TapeError(f"backward root must be scalar, got shape {root.shape}")
        self.consumed = True
        if root.requires_grad and root._tape is not self:
            root.grad = _acc_dense(root.grad, np.ones_like(root.data))
            return
        if root._tape is not self:
            raise TapeError("root was not produced on this tape")

        grads: dict[int, np.ndarray] = {root.node_id: np.ones_like(root.data)}
        owned: set[int] = set()
        leaf_grads: dict[int, np.ndarray] = {}
        leaf_tensors: dict[int, Tensor] = {}
        leaf_owned: set[int] = set()
        for nid in range(root.node_id, -1, -1):
            g = grads.pop(nid, None)
            if g is None:
                continue
            _, inputs, fn = self._nodes[nid]
            for t, gi in zip(inputs, fn(g)):
                if gi is None:
                    continue
                if t._tape is self:
                    _accumulate(grads, owned, t.node_id, gi, t.data.shape)
                elif t.requires_grad:
                    leaf_tensors[id(t)] = t
                    _accumulate(leaf_grads, leaf_owned, id(t), gi, t.data.shape)
        for key, t in leaf_tensors.items():
            t.grad = _acc_dense(t.grad, leaf_grads[key])
        for p in params or ():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def _acc_dense(cur, g):
    g = np.asarray(g, dtype=np.float64)
    return g.copy() if cur is None else cur + g


def _accumulate(store: dict, owned: set, key, g, shape) -> None:
    cur = store.get(key)
    if isinstance(g, _Scatter):
        if cur is None:
            cur = np.zeros(shape)
            store[key] = cur
            owned.add(key)
        elif key not in owned:
            cur = cur.copy()
            store[key] = cur
            owned.add(key)
        cur[g.index] += g.value
    elif cur is None:
        store[key] = g
        owned.discard(key)
    else:
        store[key] = cur + g
        owned.add(key)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor._wrap(np.asarray(x, dtype=np.float64))


def constant(x) -> Tensor:
    """Wrap external data as a non-differentiable tensor, checking finiteness."""
    return x if isinstance(x, Tensor) else Tensor(x)


def custom_op(value: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    """Record an operation whose gradient is supplied by the caller.

    ``backward(grad_out)`` must return one gradient (or None) per input.
    """
    return _make(np.asarray(value, dtype=np.float64), tuple(inputs), backward)


def _make(data: np.ndarray, inputs: tuple, backward: Callable) -> Tensor:
    out = Tensor._wrap(data)
    tape = active_tape()
    if tape is not None:
        for t in inputs:
            if t.requires_grad or t._tape is tape:
                tape.record(out, inputs, backward)
                break
    return out


# ---------------------------------------------------------------- broadcast

def _unbroadcast(shape: tuple, out_shape: tuple) -> Callable[[np.ndarray], np.ndarray]:
    if shape == out_shape:
        return lambda g: g
    if len(shape) == 0 or (len(shape) == 1 and shape[0] == 1 and len(out_shape) != 1):
        return lambda g: np.sum(g).reshape(shape)
    if len(shape) == 1:
        return lambda g: g.reshape(-1, shape[0]).sum(axis=0)
    return lambda g: np.sum(g).reshape(shape)


def _binary_shapes(a: Tensor, b: Tensor) -> tuple:
    sa, sb = a.data.shape, b.data.shape
    if sa == sb:
        return sa
    if a.data.size == 1 and len(sa) <= 1:
        return sb
    if b.data.size == 1 and len(sb) <= 1:
        return sa
    if len(sb) == 1 and len(sa) >= 1 and sa[-1] == sb[0]:
        return sa
    if len(sa) == 1 and len(sb) >= 1 and sb[-1] == sa[0]:
        return sb
    raise DimensionError(f"cannot broadcast shapes {sa} and {sb}")


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    shape = _binary_shapes(a, b)
    ra, rb = _unbroadcast(a.shape, shape), _unbroadcast(b.shape, shape)
    return _make(a.data + b.data, (a, b), lambda g: (ra(g), rb(g)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    shape = _binary_shapes(a, b)
    ra, rb = _unbroadcast(a.shape, shape), _unbroadcast(b.shape, shape)
    return _make(a.data - b.data, (a, b), lambda g: (ra(g), -rb(g)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    shape = _binary_shapes(a, b)
    ra, rb = _unbroadcast(a.shape, shape), _unbroadcast(b.shape, shape)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (ra(g * bd), rb(g * ad)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    shape = _binary_shapes(a, b)
    ra, rb = _unbroadcast(a.shape, shape), _unbroadcast(b.shape, shape)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        gb = g / bd
        return ra(gb), rb(-gb * out)

    return _make(out, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    e = np.exp(a.data)
    return _make(e, (a,), lambda g: (g * e,))


def log(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,))


def log1p(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make(np.log1p(x), (a,), lambda g: (g / (1.0 + x),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return _make(out, (a,), lambda g: (g * _sigmoid(x),))


def elementwise(op_kind: str, *inputs) -> Tensor:
    """Dispatch by name: add, sub, mul, div, sigmoid, tanh, relu, exp, log, log1p, softplus, neg."""
    fn = _ELEMENTWISE.get(op_kind)
    if fn is None:
        raise ValueError(f"unknown elementwise op {op_kind!r}")
    return fn(*inputs)


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg,
    "sigmoid": sigmoid, "tanh": tanh, "relu": relu, "exp": exp,
    "log": log, "log1p": log1p, "softplus": softplus,
}


def where(cond, a, b) -> Tensor:
    """Pick ``a`` where ``cond`` holds, else ``b``. ``cond`` is a constant
    boolean array broadcastable (numpy rules) to the common shape of a and b."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"where needs equal shapes, got {a.shape} and {b.shape}")
    c = np.broadcast_to(np.asarray(cond, dtype=bool), a.shape)
    return _make(np.where(c, a.data, b.data), (a, b),
                 lambda g: (np.where(c, g, 0.0), np.where(c, 0.0, g)))


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    """``a[..., k] @ b[k, n]``."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    out = ad @ bd

    def backward(g):
        ga = g @ bd.T
        gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _make(out, (a, b), backward)


# ---------------------------------------------------------------- reductions

def _check_axis(x: Tensor, axis):
    if axis is None:
        return None
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} out of range for shape {x.shape}")
    return axis % x.ndim


def reduce_sum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    shape = a.shape
    if axis is None:
        return _make(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape),))
    out = a.data.sum(axis=axis)
    return _make(out, (a,), lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape),))


def reduce_mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    shape = a.shape
    n = a.data.size if axis is None else shape[axis]
    if axis is None:
        out = np.asarray(a.data.sum() / n) if n else np.asarray(np.nan)
        return _make(out, (a,), lambda g: (np.broadcast_to(g / n, shape),))
    out = a.data.sum(axis=axis) / n if n else np.full(np.delete(shape, axis), np.nan)
    return _make(out, (a,), lambda g: (np.broadcast_to(np.expand_dims(g / n, axis), shape),))


def reduce_max(a, axis=None) -> Tensor:
    """Max; the gradient goes to the first maximal element on ties."""
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    x = a.data
    if x.size == 0:
        raise DimensionError("max of an empty tensor")
    if axis is None:
        idx = int(np.argmax(x))
        pos = np.unravel_index(idx, x.shape)

        def backward(g):
            out = np.zeros_like(x)
            out[pos] = g
            return (out,)

        return _make(np.asarray(x.reshape(-1)[idx]), (a,), backward)
    arg = np.expand_dims(np.argmax(x, axis=axis), axis)
    out = np.take_along_axis(x, arg, axis=axis).squeeze(axis)

    def backward(g):
        gx = np.zeros_like(x)
        np.put_along_axis(gx, arg, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _make(out, (a,), backward)


def reduce(op_kind: str, x, axis=None) -> Tensor:
    fn = {"sum": reduce_sum, "mean": reduce_mean, "max": reduce_max}.get(op_kind)
    if fn is None:
        raise ValueError(f"unknown reduction {op_kind!r}")
    return fn(x, axis)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _make(s, (a,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    return _make(out, (a,), lambda g: (g - np.exp(out) * g.sum(axis=axis, keepdims=True),))


def logsumexp(x: np.ndarray, axis=None) -> np.ndarray:
    """Plain-numpy logsumexp that tolerates all ``-inf`` slices."""
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return out.squeeze(axis) if axis is not None else out.reshape(())


# ---------------------------------------------------------------- shape ops

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    return _make(a.data[index], (a,), lambda g: (_Scatter(index, g),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    out = np.concatenate([t.data for t in ts], axis=axis)
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax)
                     for i in range(len(ts)))

    return _make(out, ts, backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    out = np.stack([t.data for t in ts], axis=axis)
    ax = axis % out.ndim

    def backward(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(ts)))

    return _make(out, ts, backward)


# ---------------------------------------------------------------- fused layers

def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    n = x.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise DimensionError(f"layer_norm affine shapes {gamma.shape}, {beta.shape} vs last axis {n}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gamma.data

    def backward(g):
        gx_hat = g * gd
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, n)
        return gx, (flat * xhat.reshape(-1, n)).sum(axis=0), flat.sum(axis=0)

    return _make(xhat * gd + beta.data, (x, gamma, beta), backward)
