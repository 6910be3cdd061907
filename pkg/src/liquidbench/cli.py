"""Command-line entry point: ``train``, ``eval``, ``stress`` and ``inspect``.

Exit codes: 0 success, 1 runtime failure, 2 usage or config-file error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

from liquidbench import checkpoint as ckpt_io
from liquidbench import evaluation
from liquidbench.config import ConfigFileError, parse_rates, read_config
from liquidbench.model import ConfigError, ModelConfig, build_model, closed_form_param_count
from liquidbench.stress import DEFAULT_RATES, DROPOUT_MODES, StressPlan, run_stress_sweep
from liquidbench.train import TrainConfig, TrainingError, load_splits, model_from_checkpoint, train

log = logging.getLogger("liquidbench")

SEED_ENV = "LIQUIDBENCH_SEED"
SPLITS = ("train", "val", "test")

# (flag, type, help) for TrainConfig fields settable from the command line
_TRAIN_FLAGS = [
    ("cell", str, "ltc, cfc or lstm"),
    ("hidden", int, "hidden units"),
    ("n", int, "synthetic dataset size"),
    ("epochs", int, None),
    ("batch_size", int, None),
    ("optimizer", str, "adam or adamw"),
    ("lr", float, "base learning rate"),
    ("weight_decay", float, None),
    ("schedule", str, "none, cosine or step"),
    ("step_interval", int, "epochs between step decays"),
    ("step_gamma", float, "step decay factor"),
    ("grad_clip", float, "max global gradient norm (0 disables)"),
    ("save_every", int, "extra checkpoint every N epochs (0 disables)"),
    ("encoder", str, "identity or linear_norm_relu"),
    ("encoder_dim", int, None),
    ("aggregation", str, "mean_pool, global_avg_pool, last_state or per_step"),
    ("mlp_hidden", int, "hidden width of the MLP head (0: linear head)"),
    ("dropout", float, "MLP head dropout during training"),
    ("leakage_floor", float, None),
    ("unfolds", int, "LTC Euler substeps per step"),
    ("cfc_target", str, "head or constant"),
]


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _rates(text: str) -> tuple[float, ...]:
    try:
        return parse_rates(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liquidbench",
                                     description="Continuous-time recurrent cells on irregular sequences.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--seed", type=int, help=f"random seed (fallback: ${SEED_ENV}, then 0)")
    common.add_argument("--out", type=Path, default=Path("runs"), help="output directory")

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--dataset", "--task", dest="task", help="synthetic task kind or dataset path")
    for name, typ, text in _TRAIN_FLAGS:
        p.add_argument(f"--{name}", type=typ, help=text)
    p.add_argument("--recurrent_gate", type=_bool, help="CfC gate and target read the hidden state")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")

    for name, text in (("eval", "evaluate a checkpoint"), ("stress", "temporal-dropout sweep")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--checkpoint", type=Path, required=True)
        p.add_argument("--dataset", "--task", dest="task",
                       help="override the task stored in the checkpoint")
        p.add_argument("--split", choices=SPLITS, default="test")
        if name == "stress":
            p.add_argument("--drop_rates", type=_rates, help="comma-separated, default 0,0.3,0.5,0.7")
            p.add_argument("--mode", choices=DROPOUT_MODES)
            p.add_argument("--trials", type=int, help="seeds per rate (default 5)")

    p = sub.add_parser("inspect", help="print configuration and parameter counts")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--cell", default="cfc")
    p.add_argument("--input_dim", type=int)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--n_out", type=int, default=2)
    p.add_argument("--recurrent_gate", type=_bool, default=True)
    p.add_argument("--cfc_target", default="head")
    return parser


# ---------------------------------------------------------------- helpers

def resolve_seed(flag: int | None, file_value: int | None) -> int:
    if flag is not None:
        return flag
    if file_value is not None:
        return file_value
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigFileError(f"${SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _file_sections(args) -> tuple[dict, dict]:
    return read_config(args.config) if args.config else ({}, {})


def train_config_from_args(args) -> TrainConfig:
    file_train, _ = _file_sections(args)
    values = dict(file_train)
    for f in fields(TrainConfig):
        flag = getattr(args, f.name, None)
        if flag is not None and f.name != "seed":
            values[f.name] = flag
    values["seed"] = resolve_seed(args.seed, file_train.get("seed"))
    try:
        return TrainConfig(**values)
    except ValueError as exc:
        raise ConfigFileError(str(exc), args.config) from None


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _report_dict(rep) -> dict:
    return rep.to_dict()


def _eval_data(args, ck):
    cfg, model = model_from_checkpoint(ck)
    if args.task:
        cfg = replace(cfg, task=args.task)
    splits = dict(zip(SPLITS, load_splits(cfg)))
    data = splits[args.split]
    if data.input_dim != model.config.input_dim:
        raise ConfigError(f"dataset input_dim {data.input_dim} != model input_dim {model.config.input_dim}")
    return cfg, model, data


# ---------------------------------------------------------------- commands

def cmd_train(args) -> int:
    from liquidbench.plotting import training_curves

    cfg = train_config_from_args(args)
    out = args.out
    result = train(cfg, out, resume=args.resume)
    metric = "cer" if result.model.config.head == "ctc_vocab" else "accuracy"
    training_curves(result.history, out / "training.png", metric)
    _write_json(out / "metrics.json", {
        "command": "train",
        "config": {"train": cfg.to_dict(), "model": result.model.config.to_dict()},
        "params": result.model.param_counts(),
        "best_val": result.best_val,
        "test": _report_dict(result.test),
        "timing": {"wall_seconds": result.wall_seconds},
    })
    print(f"test {metric}: {evaluation.primary_metric(result.model, result.test)!r}")
    print(f"wrote {out / 'log.csv'}, {out / 'best.ckpt'}, {out / 'final.ckpt'}, {out / 'metrics.json'}")
    return 0


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    ck = ckpt_io.load(args.checkpoint)
    cfg, model, data = _eval_data(args, ck)
    rep = evaluation.evaluate(model, data)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "metrics.json", {
        "command": "eval",
        "checkpoint": str(args.checkpoint),
        "config": {"train": cfg.to_dict(), "model": model.config.to_dict()},
        "split": args.split,
        "metrics": _report_dict(rep),
        "timing": {"wall_seconds": time.perf_counter() - t0},
    })
    print(f"accuracy: {rep.accuracy!r}" + (f"  cer: {rep.cer!r}" if rep.cer is not None else ""))
    return 0


def cmd_stress(args) -> int:
    from liquidbench.plotting import stress_curve

    t0 = time.perf_counter()
    _, file_stress = _file_sections(args)
    ck = ckpt_io.load(args.checkpoint)
    cfg, model, data = _eval_data(args, ck)
    plan = StressPlan(
        rates=args.drop_rates or file_stress.get("drop_rates", DEFAULT_RATES),
        mode=args.mode or file_stress.get("mode", "zero_fill"),
        trials=args.trials or file_stress.get("trials", 5),
        base_seed=resolve_seed(args.seed, file_stress.get("base_seed")),
    )
    result = run_stress_sweep(model, data, plan)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "stress.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rate", "trial", "accuracy", "cer"])
        for (rate, trial), rep in sorted(result.reports.items()):
            w.writerow([repr(rate), trial, repr(rep.accuracy), "" if rep.cer is None else repr(rep.cer)])
    stress_curve(result, out / "stress.png", label=model.config.cell)
    _write_json(out / "metrics.json", {
        "command": "stress",
        "checkpoint": str(args.checkpoint),
        "config": {"train": cfg.to_dict(), "model": model.config.to_dict()},
        "split": args.split,
        "stress": result.to_dict(),
        "timing": {"wall_seconds": time.perf_counter() - t0},
    })
    for s in result.aggregate:
        print(f"rate {s.rate:g}: median accuracy {s.median!r} (IQR {s.iqr!r})")
    if not result.monotone:
        print("warning: median accuracy is not non-increasing in the drop rate", file=sys.stderr)
    return 0


def cmd_inspect(args) -> int:
    if args.checkpoint is not None:
        ck = ckpt_io.load(args.checkpoint)
        _, model = model_from_checkpoint(ck)
        config = model.config
        extra = {"epochs_done": ck.meta.get("epochs_done"), "best_val": ck.meta.get("best_val"),
                 "config_hash": ck.meta.get("config_hash")}
    else:
        if args.input_dim is None:
            raise ConfigError("inspect needs --checkpoint or --input_dim")
        config = ModelConfig(input_dim=args.input_dim, cell=args.cell, hidden_dim=args.hidden,
                             n_out=args.n_out, recurrent_gate=args.recurrent_gate,
                             cfc_target=args.cfc_target)
        model = build_model(config, 0)
        extra = {}
    doc = {"model": config.to_dict(), "params": model.param_counts(),
           "closed_form": closed_form_param_count(config), **extra}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "stress": cmd_stress, "inspect": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigFileError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ckpt_io.CheckpointError, TrainingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
