"""Recurrent cores sharing one step interface ``(params, state, x, delta_t)``.

* ``ltc``: liquid time-constant cell, ``dh/dt = (f(x, h) - h) / tau(x, h)``
  advanced by explicit Euler substeps.
* ``cfc``: closed-form continuous-time cell. Each step solves
  ``dh/dt = -(A + f) * h + f * L`` exactly, with the gate ``f`` and target
  ``L`` read once at the start of the step and held fixed across it.
* ``lstm``: the discrete-time baseline; ``delta_t`` is ignored.

Weight layouts (``d`` inputs, ``m`` hidden units)::

    cfc   W_gate (d, m)  b_gate (m)  A_raw (m)  [+ U_gate (m, m)]
          target_mode "head":      W_target (d, m)  b_target (m)  [+ U_target (m, m)]
          target_mode "constant":  L (m)
          (the bracketed recurrent matrices exist when recurrent_gate is set)
    ltc   W_fx (d, m)  W_fh (m, m)  b_f (m)  W_tx (d, m)  W_th (m, m)  b_t (m)
    lstm  W (d, 4m)  U (m, 4m)  b (4m)     gate order: input, forget, cell, output

``f = sigmoid(...)`` lies in (0, 1) and ``A = leakage_floor + softplus(A_raw)``,
so the decay rate ``A + f`` never drops below ``leakage_floor``. With the
target head, ``L = tanh(...)`` lies in (-1, 1) and so does every state reached
from a state in that range. Likewise the
LTC time constant is ``tau = leakage_floor + softplus(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from liquidbench import autograd as ad
from liquidbench.autograd import Tensor
from liquidbench.rng import RngStream

CELL_KINDS = ("ltc", "cfc", "lstm")
TARGET_MODES = ("head", "constant")
DEFAULT_LEAKAGE_FLOOR = 0.01
DEFAULT_UNFOLDS = 6


def normalize_kind(kind: str) -> str:
    k = str(kind).lower()
    if k not in CELL_KINDS:
        raise ValueError(f"unknown cell kind {kind!r}; expected one of {CELL_KINDS}")
    return k


def weight_shapes(kind: str, input_dim: int, hidden_dim: int, recurrent_gate: bool = True,
                  target_mode: str = "head") -> dict[str, tuple[int, ...]]:
    d, m = input_dim, hidden_dim
    kind = normalize_kind(kind)
    if kind == "cfc":
        if target_mode not in TARGET_MODES:
            raise ValueError(f"target_mode must be one of {TARGET_MODES}, got {target_mode!r}")
        shapes = {"W_gate": (d, m), "b_gate": (m,), "A_raw": (m,)}
        if recurrent_gate:
            shapes["U_gate"] = (m, m)
        if target_mode == "head":
            shapes.update({"W_target": (d, m), "b_target": (m,)})
            if recurrent_gate:
                shapes["U_target"] = (m, m)
        else:
            shapes["L"] = (m,)
        return shapes
    if kind == "ltc":
        return {"W_fx": (d, m), "W_fh": (m, m), "b_f": (m,),
                "W_tx": (d, m), "W_th": (m, m), "b_t": (m,)}
    return {"W": (d, 4 * m), "U": (m, 4 * m), "b": (4 * m,)}


def core_param_count(kind: str, input_dim: int, hidden_dim: int,
                     recurrent_gate: bool = True, target_mode: str = "head") -> int:
    """Closed-form parameter count of a recurrent core."""
    d, m = input_dim, hidden_dim
    kind = normalize_kind(kind)
    if kind == "lstm":
        return 4 * (d * m + m * m + m)
    if kind == "ltc":
        return 2 * (d * m + m * m + m)
    block = d * m + m + (m * m if recurrent_gate else 0)
    if target_mode == "head":
        return 2 * block + m
    return block + 2 * m


@dataclass
class CellParams:
    kind: str
    input_dim: int
    hidden_dim: int
    weights: dict[str, Tensor]
    leakage_floor: float = DEFAULT_LEAKAGE_FLOOR
    unfolds: int = DEFAULT_UNFOLDS
    recurrent_gate: bool = True
    target_mode: str = "head"

    def __post_init__(self):
        self.kind = normalize_kind(self.kind)
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValueError("input_dim and hidden_dim must be positive")
        if not self.leakage_floor > 0:
            raise ValueError(f"leakage_floor must be positive, got {self.leakage_floor}")
        if self.unfolds < 1:
            raise ValueError(f"unfolds must be >= 1, got {self.unfolds}")
        expected = weight_shapes(self.kind, self.input_dim, self.hidden_dim,
                                 self.recurrent_gate, self.target_mode)
        if set(expected) != set(self.weights):
            raise ValueError(f"{self.kind} weights must be {sorted(expected)}, got {sorted(self.weights)}")
        for name, shape in expected.items():
            if self.weights[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {self.weights[name].shape}")

    def parameters(self) -> list[Tensor]:
        return list(self.weights.values())

    def num_parameters(self) -> int:
        return sum(w.size for w in self.weights.values())


@dataclass
class CellState:
    hidden: Tensor
    cell_memory: Tensor | None = field(default=None)


def init_cell(kind: str, input_dim: int, hidden_dim: int, rng: RngStream,
              leakage_floor: float = DEFAULT_LEAKAGE_FLOOR, unfolds: int = DEFAULT_UNFOLDS,
              recurrent_gate: bool = True, target_mode: str = "head") -> CellParams:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` initialization.

    Per-unit vectors (``A_raw``, ``L``) and recurrent matrices use
    ``fan_in = hidden_dim``; biases use the fan-in of their input matrix. LSTM forget-gate biases start at 1.
    """
    kind = normalize_kind(kind)
    d, m = input_dim, hidden_dim
    shapes = weight_shapes(kind, d, m, recurrent_gate, target_mode)
    fan_in = {
        "cfc": {"W_gate": d, "b_gate": d, "U_gate": m, "W_target": d, "b_target": d,
                "U_target": m, "A_raw": m, "L": m},
        "ltc": {"W_fx": d + m, "W_fh": d + m, "b_f": d + m,
                "W_tx": d + m, "W_th": d + m, "b_t": d + m},
        "lstm": {"W": m, "U": m, "b": m},
    }[kind]
    weights = {}
    for name, shape in shapes.items():
        bound = 1.0 / np.sqrt(fan_in[name])
        weights[name] = Tensor(rng.split(name).uniform(shape, -bound, bound),
                               requires_grad=True, name=name)
    if kind == "lstm":
        weights["b"].data[m:2 * m] = 1.0
    return CellParams(kind, d, m, weights, leakage_floor, unfolds, recurrent_gate, target_mode)


def initial_state(params: CellParams, batch: int) -> CellState:
    h = Tensor._wrap(np.zeros((batch, params.hidden_dim)))
    c = Tensor._wrap(np.zeros((batch, params.hidden_dim))) if params.kind == "lstm" else None
    return CellState(h, c)


def _check_dt(delta_t, batch: int) -> np.ndarray:
    dt = np.asarray(delta_t, dtype=np.float64)
    if dt.ndim == 0:
        dt = np.full(batch, float(dt))
    if dt.shape != (batch,):
        raise ad.DimensionError(f"delta_t must have shape ({batch},), got {dt.shape}")
    if not np.all(dt > 0) or not np.all(np.isfinite(dt)):
        raise ValueError("delta_t must be strictly positive and finite")
    return dt


def _check_x(params: CellParams, x) -> Tensor:
    x = ad.as_tensor(x)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ad.DimensionError(f"x must be (batch, {params.input_dim}), got {x.shape}")
    return x


# ---------------------------------------------------------------- LTC

def ltc_gates(params: CellParams, x, h) -> tuple[Tensor, Tensor]:
    """Return ``(f, tau)`` for the LTC cell, both ``(batch, hidden)``."""
    w = params.weights
    f = ad.sigmoid(x @ w["W_fx"] + h @ w["W_fh"] + w["b_f"])
    tau = ad.softplus(x @ w["W_tx"] + h @ w["W_th"] + w["b_t"]) + params.leakage_floor
    return f, tau


def ltc_derivative(params: CellParams, x, h) -> Tensor:
    """``dh/dt = (f(x, h) - h) / tau(x, h)``."""
    x = _check_x(params, x)
    h = ad.as_tensor(h)
    if h.shape != (x.shape[0], params.hidden_dim):
        raise ad.DimensionError(f"h must be {(x.shape[0], params.hidden_dim)}, got {h.shape}")
    f, tau = ltc_gates(params, x, h)
    return (f - h) / tau


def _ltc_euler(pre_f: Tensor, pre_t: Tensor, h: Tensor, step: np.ndarray, floor: float) -> Tensor:
    """One fused Euler substep ``h + step * (sigmoid(pre_f) - h) / tau``."""
    f = ad._sigmoid(pre_f.data)
    sp = np.maximum(pre_t.data, 0.0) + np.log1p(np.exp(-np.abs(pre_t.data)))
    tau = floor + sp
    hd = h.data
    rate = step / tau
    drive = f - hd
    out = hd + rate * drive

    def backward(g):
        return (g * rate * f * (1.0 - f),
                -g * rate * drive / tau * ad._sigmoid(pre_t.data),
                g * (1.0 - rate))

    return ad.custom_op(out, (pre_f, pre_t, h), backward)


def _ltc_advance(params: CellParams, px_f: Tensor, px_t: Tensor, h: Tensor,
                 dt: np.ndarray, unfolds: int) -> Tensor:
    w = params.weights
    step = (dt / unfolds)[:, None]
    for _ in range(unfolds):
        h = _ltc_euler(px_f + h @ w["W_fh"], px_t + h @ w["W_th"], h, step,
                       params.leakage_floor)
    return h


def ltc_step(params: CellParams, state: CellState, x, delta_t,
             unfolds: int | None = None) -> CellState:
    """Advance by ``delta_t`` using ``unfolds`` explicit Euler substeps.

    The update is a convex combination of ``h`` and ``f`` whenever
    ``delta_t / unfolds <= tau``, which keeps ``|h| <= max(|h0|, 1)``.
    """
    x = _check_x(params, x)
    dt = _check_dt(delta_t, x.shape[0])
    unfolds = params.unfolds if unfolds is None else int(unfolds)
    if unfolds < 1:
        raise ValueError(f"unfolds must be >= 1, got {unfolds}")
    w = params.weights
    h = _ltc_advance(params, x @ w["W_fx"] + w["b_f"], x @ w["W_tx"] + w["b_t"],
                     state.hidden, dt, unfolds)
    return CellState(h)


# ---------------------------------------------------------------- CfC

def cfc_rates(params: CellParams) -> Tensor:
    """Per-unit leakage ``A = leakage_floor + softplus(A_raw)``."""
    return ad.softplus(params.weights["A_raw"]) + params.leakage_floor


def _cfc_update(pre_f: Tensor, A: Tensor, target: Tensor, h: Tensor, dt: np.ndarray,
                target_is_pre: bool) -> Tensor:
    """Exact solution after ``dt`` with the gate and target held fixed.

    ``f = sigmoid(pre_f)``, ``L = tanh(target)`` (or ``target`` itself when it
    is the constant per-unit vector), then
    ``h_inf = f*L / (A+f)`` and ``h' = h_inf + (h - h_inf) * exp(-(A+f) dt)``.
    """
    f = ad._sigmoid(pre_f.data)
    L = np.tanh(target.data) if target_is_pre else target.data
    Ad, hd = A.data, h.data
    k = Ad + f
    h_inf = f * L / k
    e = np.exp(-k * dt[:, None])
    diff = hd - h_inf
    out = h_inf + diff * e

    def backward(g):
        g_inf = g * (1.0 - e)
        g_k = -g * diff * e * dt[:, None]
        g_f = g_inf * L * Ad / (k * k) + g_k
        g_A = (-g_inf * h_inf / k + g_k).sum(axis=0)
        g_L = g_inf * f / k
        if target_is_pre:
            g_target = g_L * (1.0 - L * L)
        else:
            g_target = g_L.sum(axis=0)
        return g_f * f * (1.0 - f), g_A, g_target, g * e

    return ad.custom_op(out, (pre_f, A, target, h), backward)


def cfc_preactivations(params: CellParams, x, h=None) -> tuple[Tensor, Tensor]:
    """Gate and target pre-activations; the target is the constant ``L`` in
    ``constant`` target mode."""
    w = params.weights
    pre_f = x @ w["W_gate"] + w["b_gate"]
    if params.target_mode == "head":
        pre_t = x @ w["W_target"] + w["b_target"]
    else:
        pre_t = w["L"]
    if params.recurrent_gate and h is not None:
        pre_f = pre_f + h @ w["U_gate"]
        if params.target_mode == "head":
            pre_t = pre_t + h @ w["U_target"]
    return pre_f, pre_t


def cfc_coefficients(params: CellParams, x, h) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(f, A, L)`` as numpy arrays, for checking the step against an integrator."""
    pre_f, pre_t = cfc_preactivations(params, ad.as_tensor(x), ad.as_tensor(h))
    L = np.tanh(pre_t.data) if params.target_mode == "head" else np.broadcast_to(pre_t.data, pre_f.shape)
    return ad._sigmoid(pre_f.data), cfc_rates(params).data, L


def cfc_step(params: CellParams, state: CellState, x, delta_t,
             gate_state: Tensor | None = None) -> CellState:
    """One closed-form step.

    The gate and target read ``x`` and ``gate_state`` (default: the current
    hidden state) once, at the start of the step. Passing the same
    ``gate_state`` to consecutive steps freezes the whole input, and the steps
    then compose exactly: ``Δt1`` followed by ``Δt2`` equals ``Δt1 + Δt2``.
    """
    x = _check_x(params, x)
    dt = _check_dt(delta_t, x.shape[0])
    read = state.hidden if gate_state is None else gate_state
    pre_f, pre_t = cfc_preactivations(params, x, read)
    h = _cfc_update(pre_f, cfc_rates(params), pre_t, state.hidden, dt,
                    params.target_mode == "head")
    return CellState(h)


# ---------------------------------------------------------------- LSTM

def _lstm_update(z: Tensor, c: Tensor, m: int) -> Tensor:
    """Fused gates; returns ``[h | c]`` of shape ``(batch, 2m)``."""
    zd = z.data
    i = ad._sigmoid(zd[:, :m])
    f = ad._sigmoid(zd[:, m:2 * m])
    g = np.tanh(zd[:, 2 * m:3 * m])
    o = ad._sigmoid(zd[:, 3 * m:])
    cd = c.data
    c_new = f * cd + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    def backward(grad):
        gh, gc = grad[:, :m], grad[:, m:]
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate([dc * g * i * (1.0 - i),
                             dc * cd * f * (1.0 - f),
                             dc * i * (1.0 - g * g),
                             gh * tc * o * (1.0 - o)], axis=1)
        return dz, dc * f

    return ad.custom_op(np.concatenate([h_new, c_new], axis=1), (z, c), backward)


def _lstm_advance(params: CellParams, zx: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    m = params.hidden_dim
    hc = _lstm_update(zx + h @ params.weights["U"], c, m)
    return hc[:, :m], hc[:, m:]


def lstm_step(params: CellParams, state: CellState, x, delta_t=None) -> CellState:
    """Standard LSTM update. ``delta_t`` is accepted and ignored."""
    if state.cell_memory is None:
        raise ValueError("lstm_step needs cell_memory in the state")
    x = _check_x(params, x)
    w = params.weights
    h, c = _lstm_advance(params, x @ w["W"] + w["b"], state.hidden, state.cell_memory)
    return CellState(h, c)


def step(params: CellParams, state: CellState, x, delta_t) -> CellState:
    """Advance any cell kind by one observation."""
    if params.kind == "cfc":
        return cfc_step(params, state, x, delta_t)
    if params.kind == "ltc":
        return ltc_step(params, state, x, delta_t)
    return lstm_step(params, state, x, delta_t)


# ---------------------------------------------------------------- sequences

SEQUENCE_MODES = ("zero_fill", "merge")


def sequence_forward(params: CellParams, x, delta_t, mask,
                     initial: CellState | None = None,
                     mode: str = "zero_fill") -> tuple[Tensor, CellState]:
    """Unroll a cell over ``x`` of shape ``(batch, T, input_dim)``.

    Steps with ``mask == 0`` leave the state untouched. In ``merge`` mode
    their elapsed time is carried into the next valid step instead of being
    discarded. Returns the stacked hidden states ``(batch, T, hidden)`` and
    the final state.
    """
    if mode not in SEQUENCE_MODES:
        raise ValueError(f"mode must be one of {SEQUENCE_MODES}, got {mode!r}")
    x = ad.as_tensor(x)
    if x.ndim != 3 or x.shape[2] != params.input_dim:
        raise ad.DimensionError(f"x must be (batch, T, {params.input_dim}), got {x.shape}")
    B, T, _ = x.shape
    if T == 0:
        raise ValueError("empty sequence (T = 0)")
    dt = np.asarray(delta_t, dtype=np.float64)
    valid = np.asarray(mask).astype(bool)
    if dt.shape != (B, T) or valid.shape != (B, T):
        raise ad.DimensionError(f"delta_t and mask must be {(B, T)}, got {dt.shape}, {valid.shape}")
    if not np.all(dt[valid] > 0):
        raise ValueError("delta_t must be strictly positive at valid steps")
    if mode == "merge":
        # masked elapsed time is carried forward, so it has to be meaningful
        if not (np.all(np.isfinite(dt)) and np.all(dt >= 0)):
            raise ValueError("merge mode needs finite, nonnegative delta_t everywhere")
    else:
        dt = np.where(valid, dt, 1.0)

    state = initial if initial is not None else initial_state(params, B)
    h, c = state.hidden, state.cell_memory
    w = params.weights
    kind = params.kind
    if kind == "cfc":
        # input part of the pre-activations for every step at once
        pf_all, pt_all = cfc_preactivations(params, x)
        A = cfc_rates(params)
        head = params.target_mode == "head"
    elif kind == "ltc":
        px_f = x @ w["W_fx"] + w["b_f"]
        px_t = x @ w["W_tx"] + w["b_t"]
    else:
        zx = x @ w["W"] + w["b"]
        if c is None:
            raise ValueError("lstm sequence needs cell_memory in the initial state")

    pending = np.zeros(B)
    outputs = []
    for t in range(T):
        m_t = valid[:, t]
        if not m_t.any():
            if mode == "merge":
                pending = pending + dt[:, t]
            outputs.append(h)
            continue
        dt_t = dt[:, t] + pending if mode == "merge" else dt[:, t]
        if kind == "cfc":
            pf = pf_all[:, t, :]
            pt = pt_all[:, t, :] if head else pt_all
            if params.recurrent_gate:
                pf = pf + h @ w["U_gate"]
                if head:
                    pt = pt + h @ w["U_target"]
            h_new, c_new = _cfc_update(pf, A, pt, h, dt_t, head), None
        elif kind == "ltc":
            h_new, c_new = _ltc_advance(params, px_f[:, t, :], px_t[:, t, :], h, dt_t,
                                        params.unfolds), None
        else:
            h_new, c_new = _lstm_advance(params, zx[:, t, :], h, c)
        if m_t.all():
            h, c = h_new, c_new
        else:
            keep = m_t[:, None]
            h = ad.where(keep, h_new, h)
            if c is not None:
                c = ad.where(keep, c_new, c)
        if mode == "merge":
            pending = np.where(m_t, 0.0, pending + dt[:, t])
        outputs.append(h)
    return ad.stack(outputs, axis=1), CellState(h, c)
