"""Encoder -> recurrent core -> aggregation -> head."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from liquidbench import autograd as ad
from liquidbench import cells
from liquidbench.autograd import Tensor
from liquidbench.data.batch import SequenceBatch
from liquidbench.rng import RngStream

ENCODERS = ("identity", "linear_norm_relu")
HEADS = ("softmax_classes", "ctc_vocab", "binary_logit")
AGGREGATIONS = ("mean_pool", "global_avg_pool", "last_state", "per_step")
LAYER_NORM_EPS = 1e-5


class ConfigError(ValueError):
    """Invalid or inconsistent model configuration."""


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    cell: str = "cfc"
    hidden_dim: int = 32
    encoder: str = "identity"
    encoder_dim: int = 0
    head: str = "softmax_classes"
    n_out: int = 2
    aggregation: str = "mean_pool"
    mlp_hidden: int = 0
    dropout: float = 0.3
    leakage_floor: float = cells.DEFAULT_LEAKAGE_FLOOR
    unfolds: int = cells.DEFAULT_UNFOLDS
    recurrent_gate: bool = True
    cfc_target: str = "head"

    def __post_init__(self):
        try:
            object.__setattr__(self, "cell", cells.normalize_kind(self.cell))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.encoder not in ENCODERS:
            raise ConfigError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if self.head == "ctc_vocab" and self.aggregation != "per_step":
            raise ConfigError("ctc_vocab needs per-step outputs (aggregation = per_step)")
        if self.aggregation == "per_step" and self.head != "ctc_vocab":
            raise ConfigError("per_step aggregation is only valid with the ctc_vocab head")
        if self.head == "binary_logit" and self.aggregation != "last_state":
            raise ConfigError("binary_logit needs aggregation = last_state")
        if self.input_dim < 1 or self.hidden_dim < 1 or self.n_out < 1:
            raise ConfigError("input_dim, hidden_dim and n_out must be positive")
        if self.encoder == "linear_norm_relu" and self.encoder_dim < 1:
            raise ConfigError("linear_norm_relu needs encoder_dim >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.mlp_hidden < 0:
            raise ConfigError("mlp_hidden must be >= 0")
        if self.cfc_target not in cells.TARGET_MODES:
            raise ConfigError(f"cfc_target must be one of {cells.TARGET_MODES}, got {self.cfc_target!r}")

    @property
    def core_input_dim(self) -> int:
        return self.encoder_dim if self.encoder == "linear_norm_relu" else self.input_dim

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def closed_form_param_count(config: ModelConfig) -> dict[str, int]:
    """Parameter counts by block, from formulas only."""
    d, e, m, k = config.input_dim, config.encoder_dim, config.hidden_dim, config.n_out
    enc = d * e + 3 * e if config.encoder == "linear_norm_relu" else 0
    core = cells.core_param_count(config.cell, config.core_input_dim, m,
                                  config.recurrent_gate, config.cfc_target)
    if config.head == "softmax_classes":
        hm = config.mlp_hidden
        head = m * hm + hm + hm * k + k if hm else m * k + k
    elif config.head == "ctc_vocab":
        head = m * (k + 1) + (k + 1)
    else:
        head = m + 1
    return {"encoder": enc, "core": core, "head": head, "total": enc + core + head}


@dataclass
class ModelOutput:
    logits: Tensor
    hidden_trace: Tensor | None = None


class Model:
    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params
        cell_w = {name[5:]: t for name, t in params.items() if name.startswith("cell.")}
        self.cell = cells.CellParams(config.cell, config.core_input_dim, config.hidden_dim, cell_w,
                                     config.leakage_floor, config.unfolds, config.recurrent_gate,
                                     config.cfc_target)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def param_counts(self) -> dict[str, int]:
        counts = {"encoder": 0, "core": 0, "head": 0}
        for name, p in self.params.items():
            block = {"enc": "encoder", "cell": "core", "head": "head"}[name.split(".")[0]]
            counts[block] += p.size
        counts["total"] = sum(counts.values())
        return counts

    # -------------------------------------------------------------- forward

    def _encode(self, x: Tensor) -> Tensor:
        if self.config.encoder == "identity":
            return x
        p = self.params
        B, T, D = x.shape
        z = x.reshape(B * T, D) @ p["enc.W"] + p["enc.b"]
        z = ad.relu(ad.layer_norm(z, p["enc.gamma"], p["enc.beta"], LAYER_NORM_EPS))
        return z.reshape(B, T, self.config.encoder_dim)

    def _check(self, batch: SequenceBatch) -> None:
        if batch.inputs.shape[2] != self.config.input_dim:
            raise ad.DimensionError(
                f"batch input_dim {batch.inputs.shape[2]} != model input_dim {self.config.input_dim}")

    def hidden(self, batch: SequenceBatch, mode: str = "zero_fill"):
        self._check(batch)
        x = self._encode(Tensor._wrap(batch.inputs))
        return cells.sequence_forward(self.cell, x, batch.delta_t, batch.mask, mode=mode)

    def forward(self, batch: SequenceBatch, train: bool = False, rng: RngStream | None = None,
                mode: str = "zero_fill") -> ModelOutput:
        """Logits per head: ``(B, k)``, ``(B, 1)``, or ``(B, T, v + 1)`` log-probabilities."""
        cfg = self.config
        hs, final = self.hidden(batch, mode)
        p = self.params
        if cfg.head == "ctc_vocab":
            logits = ad.log_softmax(hs @ p["head.W"] + p["head.b"], axis=-1)
            return ModelOutput(logits, hs)
        if cfg.aggregation == "last_state":
            z = final.hidden
        else:
            counts = np.maximum(batch.mask.sum(axis=1), 1.0)
            weights = np.broadcast_to((batch.mask / counts[:, None])[:, :, None], hs.shape)
            z = (hs * Tensor._wrap(np.ascontiguousarray(weights))).sum(axis=1)
        if cfg.head == "softmax_classes" and cfg.mlp_hidden:
            a = ad.relu(z @ p["head.W1"] + p["head.b1"])
            if train and cfg.dropout > 0:
                if rng is None:
                    raise ValueError("training-mode dropout needs an rng stream")
                keep = rng.bernoulli(1.0 - cfg.dropout, a.shape) / (1.0 - cfg.dropout)
                a = a * Tensor._wrap(keep)
            logits = a @ p["head.W2"] + p["head.b2"]
        else:
            logits = z @ p["head.W"] + p["head.b"]
        return ModelOutput(logits, hs)


def _param_shapes(config: ModelConfig) -> dict[str, tuple[tuple[int, ...], float | None]]:
    """Name -> (shape, uniform bound); bound None marks constant init."""
    d, e, m, k = config.input_dim, config.encoder_dim, config.hidden_dim, config.n_out
    out: dict = {}
    if config.encoder == "linear_norm_relu":
        b = 1.0 / np.sqrt(d)
        out.update({"enc.W": ((d, e), b), "enc.b": ((e,), b),
                    "enc.gamma": ((e,), None), "enc.beta": ((e,), None)})
    if config.head == "softmax_classes" and config.mlp_hidden:
        hm = config.mlp_hidden
        out.update({"head.W1": ((m, hm), 1 / np.sqrt(m)), "head.b1": ((hm,), 1 / np.sqrt(m)),
                    "head.W2": ((hm, k), 1 / np.sqrt(hm)), "head.b2": ((k,), 1 / np.sqrt(hm))})
    else:
        width = {"softmax_classes": k, "ctc_vocab": k + 1, "binary_logit": 1}[config.head]
        out.update({"head.W": ((m, width), 1 / np.sqrt(m)), "head.b": ((width,), 1 / np.sqrt(m))})
    return out


def build_model(config: ModelConfig, seed: int) -> Model:
    """Deterministic initialization from ``seed``."""
    rng = RngStream(seed).split("init")
    params: dict[str, Tensor] = {}
    extra = _param_shapes(config)
    for name in ("enc.W", "enc.b", "enc.gamma", "enc.beta"):
        if name in extra:
            shape, bound = extra[name]
            data = (np.ones(shape) if name == "enc.gamma" else np.zeros(shape)) if bound is None \
                else rng.split(name).uniform(shape, -bound, bound)
            params[name] = Tensor(data, requires_grad=True, name=name)
    core = cells.init_cell(config.cell, config.core_input_dim, config.hidden_dim, rng.split("cell"),
                           config.leakage_floor, config.unfolds, config.recurrent_gate,
                           config.cfc_target)
    for name, t in core.weights.items():
        t.name = f"cell.{name}"
        params[t.name] = t
    for name, (shape, bound) in extra.items():
        if name.startswith("head."):
            params[name] = Tensor(rng.split(name).uniform(shape, -bound, bound),
                                  requires_grad=True, name=name)
    return Model(config, params)


def forward_classify(model: Model, batch: SequenceBatch, **kwargs) -> ModelOutput:
    if model.config.head == "ctc_vocab":
        raise ConfigError("forward_classify needs a softmax_classes or binary_logit head")
    return model.forward(batch, **kwargs)


def forward_ctc(model: Model, batch: SequenceBatch, **kwargs) -> ModelOutput:
    if model.config.head != "ctc_vocab":
        raise ConfigError("forward_ctc needs the ctc_vocab head")
    return model.forward(batch, **kwargs)
