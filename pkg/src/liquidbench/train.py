"""Training loop with deterministic shuffling, checkpoints and a CSV log.

Randomness comes from streams derived from the seed by purpose and
position (``init``, ``shuffle/<epoch>``, ``dropout/<epoch>/<batch>``), so a
run resumed from a checkpoint draws exactly what the uninterrupted run
would have drawn.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from liquidbench import checkpoint as ckpt_io
from liquidbench import evaluation
from liquidbench.autograd import Tape
from liquidbench.cells import DEFAULT_LEAKAGE_FLOOR, DEFAULT_UNFOLDS
from liquidbench.data.batch import SequenceDataset
from liquidbench.data.loaders import load_task, task_family
from liquidbench.metrics import MetricsReport, edit_distance
from liquidbench.model import Model, ModelConfig, build_model
from liquidbench.optim import SCHEDULES, AdamState, adam_step, clip_grad_norm, lr_schedule
from liquidbench.rng import RngStream

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "adamw")
LOG_HEADER = ("epoch", "train_loss", "train_metric", "val_metric", "lr")

# Architecture defaults per task family; explicit config values win.
TASK_DEFAULTS = {
    "irregular_sine_class": {"encoder": "identity", "aggregation": "mean_pool"},
    "event_digits_mini": {"encoder": "linear_norm_relu", "encoder_dim": 32,
                          "aggregation": "global_avg_pool"},
    "events": {"encoder": "linear_norm_relu", "encoder_dim": 64, "aggregation": "global_avg_pool"},
    "stroke_shapes": {"encoder": "linear_norm_relu", "encoder_dim": 32, "aggregation": "mean_pool",
                      "mlp_hidden": 32},
    "strokes": {"encoder": "linear_norm_relu", "encoder_dim": 32, "aggregation": "mean_pool",
                "mlp_hidden": 32},
    "sepsis_like": {"encoder": "identity", "aggregation": "last_state"},
    "clinical": {"encoder": "identity", "aggregation": "last_state"},
    "tone_sequence": {"encoder": "identity", "aggregation": "per_step"},
}
HEAD_FOR_TARGET = {"class": "softmax_classes", "binary": "binary_logit", "sequence": "ctc_vocab"}


class TrainingError(RuntimeError):
    """Training cannot continue (non-finite loss, mismatched resume)."""


@dataclass(frozen=True)
class TrainConfig:
    task: str = "irregular_sine_class"
    n: int = 2000
    cell: str = "cfc"
    hidden: int = 32
    epochs: int = 15
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 1e-3
    weight_decay: float = 0.0
    schedule: str = "none"
    step_interval: int = 10
    step_gamma: float = 0.1
    grad_clip: float = 1.0        # 0 disables clipping
    seed: int = 0
    save_every: int = 0           # 0: only best and final checkpoints
    # architecture; None picks the task default
    encoder: str | None = None
    encoder_dim: int | None = None
    aggregation: str | None = None
    mlp_hidden: int | None = None
    dropout: float = 0.3
    leakage_floor: float = DEFAULT_LEAKAGE_FLOOR
    unfolds: int = DEFAULT_UNFOLDS
    recurrent_gate: bool = True
    cfc_target: str = "head"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.grad_clip < 0:
            raise ValueError("grad_clip must be >= 0")
        if self.save_every < 0:
            raise ValueError("save_every must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**d)

    def lr_at(self, epoch: int) -> float:
        return lr_schedule(self.schedule, self.lr, epoch, self.epochs, self.step_interval, self.step_gamma)


def model_config(cfg: TrainConfig, dataset: SequenceDataset) -> ModelConfig:
    defaults = TASK_DEFAULTS.get(task_family(cfg.task), {})

    def pick(name, fallback):
        value = getattr(cfg, name)
        return value if value is not None else defaults.get(name, fallback)

    head = HEAD_FOR_TARGET[dataset.target_kind]
    n_out = 1 if head == "binary_logit" else dataset.n_classes
    return ModelConfig(
        input_dim=dataset.input_dim, cell=cfg.cell, hidden_dim=cfg.hidden,
        encoder=pick("encoder", "identity"), encoder_dim=pick("encoder_dim", 0),
        head=head, n_out=n_out, aggregation=pick("aggregation", "mean_pool"),
        mlp_hidden=pick("mlp_hidden", 0), dropout=cfg.dropout,
        leakage_floor=cfg.leakage_floor, unfolds=cfg.unfolds,
        recurrent_gate=cfg.recurrent_gate, cfc_target=cfg.cfc_target,
    )


def load_splits(cfg: TrainConfig) -> tuple[SequenceDataset, SequenceDataset, SequenceDataset]:
    return load_task(cfg.task, cfg.seed, cfg.n).split(cfg.seed)


# ---------------------------------------------------------------- checkpoints

def make_checkpoint(cfg: TrainConfig, model: Model, opt: AdamState, epoch: int,
                    best: float | None, history: list) -> ckpt_io.Checkpoint:
    config = {"train": cfg.to_dict(), "model": model.config.to_dict()}
    meta = {
        "format": "liquidbench",
        "config": config,
        "config_hash": ckpt_io.config_hash(config),
        "epochs_done": epoch,
        "adam_step": opt.step,
        "best_val": best,
        "history": history,
        "rng": {"seed": cfg.seed, "next_epoch": epoch,
                "streams": ["init", "shuffle/<epoch>", "dropout/<epoch>/<batch>"]},
    }
    tensors = {}
    for name, p in model.params.items():
        tensors[f"param/{name}"] = p.data
    for name, m, v in zip(model.params, opt.m, opt.v):
        tensors[f"adam_m/{name}"] = m
        tensors[f"adam_v/{name}"] = v
    return ckpt_io.Checkpoint(meta, tensors)


def model_from_checkpoint(ck: ckpt_io.Checkpoint) -> tuple[TrainConfig, Model]:
    try:
        cfg = TrainConfig.from_dict(ck.meta["config"]["train"])
        mcfg = ModelConfig(**ck.meta["config"]["model"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ckpt_io.CheckpointError(f"checkpoint config is unusable: {exc}") from None
    model = build_model(mcfg, cfg.seed)
    stored = ck.group("param")
    if list(stored) != list(model.params):
        raise ckpt_io.CheckpointError("checkpoint parameters do not match the configured model")
    for name, p in model.params.items():
        if stored[name].shape != p.shape:
            raise ckpt_io.CheckpointError(f"{name}: stored shape {stored[name].shape} != {p.shape}")
        p.data[...] = stored[name]
    return cfg, model


def _opt_from_checkpoint(ck: ckpt_io.Checkpoint, model: Model) -> AdamState:
    m, v = ck.group("adam_m"), ck.group("adam_v")
    return AdamState(int(ck.meta["adam_step"]), [m[k].copy() for k in model.params],
                     [v[k].copy() for k in model.params])


# ---------------------------------------------------------------- loop

@dataclass
class TrainResult:
    config: TrainConfig
    model: Model
    history: list
    test: MetricsReport
    best_val: float | None
    wall_seconds: float


def _batch_metric(model: Model, logits: np.ndarray, batch) -> tuple[float, int]:
    """Sum of per-row scores (correct predictions, or edit errors) and the denominator."""
    preds = evaluation.decode(model, logits, batch)
    if model.config.head == "ctc_vocab":
        errs = sum(edit_distance(p, t) for p, t in zip(preds, batch.targets))
        return float(errs), sum(len(t) for t in batch.targets)
    return float(np.sum(np.asarray(preds) == np.asarray(batch.targets))), batch.batch_size


def _write_log(path: Path, history: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for row in history:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def train_epoch(model: Model, train_set: SequenceDataset, cfg: TrainConfig, opt: AdamState,
                epoch: int) -> tuple[float, float]:
    """One pass over ``train_set``; returns ``(mean loss, running metric)``."""
    params = model.parameters()
    lr = cfg.lr_at(epoch)
    root = RngStream(cfg.seed)
    order = root.split("shuffle").split(epoch).permutation(len(train_set))
    total_loss, n_loss, score, denom = 0.0, 0, 0.0, 0
    for bi, batch in enumerate(train_set.batches(cfg.batch_size, order)):
        for p in params:
            p.grad = None
        with Tape() as tape:
            loss, logits = evaluation.batch_loss(model, batch, train=True,
                                                 rng=root.split("dropout").split(f"{epoch}/{bi}"))
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, batch {bi} "
                                    f"(rows {order[bi * cfg.batch_size]}..)")
            tape.backward(loss, params)
        grads = [p.grad for p in params]
        if cfg.grad_clip > 0:
            grads = clip_grad_norm(grads, cfg.grad_clip)
        adam_step([p.data for p in params], grads, opt, lr,
                  weight_decay=cfg.weight_decay, decoupled=cfg.optimizer == "adamw")
        total_loss += value * batch.batch_size
        n_loss += batch.batch_size
        s, d = _batch_metric(model, logits.data, batch)
        score += s
        denom += d
    return total_loss / n_loss, score / denom if denom else 0.0


def train(cfg: TrainConfig, out_dir, resume=None, stop_after: int | None = None) -> TrainResult:
    """Train, writing ``log.csv``, ``best.ckpt`` and ``final.ckpt`` into ``out_dir``.

    ``resume`` is a checkpoint path; its config must equal ``cfg``.
    ``stop_after`` ends the run after that many epochs (counted from zero),
    leaving a checkpoint a later call can resume from.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    train_set, val_set, test_set = load_splits(cfg)
    model = build_model(model_config(cfg, train_set), cfg.seed)
    opt = AdamState.zeros_like([p.data for p in model.parameters()])
    start, best, history = 0, None, []
    if resume is not None:
        ck = ckpt_io.load(resume)
        stored_cfg, stored = model_from_checkpoint(ck)
        if stored_cfg != cfg or stored.config != model.config:
            raise TrainingError("resume checkpoint was written with a different configuration")
        model = stored
        opt = _opt_from_checkpoint(ck, model)
        start, best = int(ck.meta["epochs_done"]), ck.meta["best_val"]
        history = [list(r) for r in ck.meta["history"]]
    higher = evaluation.higher_is_better(model)
    best_params = None
    end = cfg.epochs if stop_after is None else min(cfg.epochs, stop_after)
    for epoch in range(start, end):
        loss, train_metric = train_epoch(model, train_set, cfg, opt, epoch)
        val = evaluation.primary_metric(model, evaluation.evaluate(model, val_set))
        history.append([epoch, loss, train_metric, val, cfg.lr_at(epoch)])
        log.info("epoch %d loss %.5f train %.4f val %.4f", epoch, loss, train_metric, val)
        improved = best is None or (val > best if higher else val < best)
        if improved:
            best = val
            best_params = [p.data.copy() for p in model.parameters()]
        ck = make_checkpoint(cfg, model, opt, epoch + 1, best, history)
        if improved:
            ckpt_io.save(ck, out / "best.ckpt")
        if cfg.save_every and (epoch + 1) % cfg.save_every == 0:
            ckpt_io.save(ck, out / f"epoch_{epoch + 1:04d}.ckpt")
        _write_log(out / "log.csv", history)
    ckpt_io.save(make_checkpoint(cfg, model, opt, end, best, history), out / "final.ckpt")
    _write_log(out / "log.csv", history)
    if best_params is None:
        # no improvement since resuming: the best weights sit in an earlier best.ckpt
        for path in [out / "best.ckpt"] + ([Path(resume).parent / "best.ckpt"] if resume else []):
            if path.exists():
                best_params = list(ckpt_io.load(path).group("param").values())
                break
    if best_params is not None:
        for p, data in zip(model.parameters(), best_params):
            p.data[...] = data
    test = evaluation.evaluate(model, test_set,
                               run_meta={"split": "test", "seed": cfg.seed, "params": "best_val"})
    return TrainResult(cfg, model, history, test, best, time.perf_counter() - t0)


def with_overrides(cfg: TrainConfig, **changes) -> TrainConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
