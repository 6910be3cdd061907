"""Inference-time temporal dropout: mask out a fraction of steps and re-evaluate.

Two masking semantics:

* ``zero_fill``: dropped steps keep their slot, with zero input and a cleared
  mask, so every cell holds its state through them.
* ``drop_merge_dt``: dropped steps are removed and their elapsed time is
  added to the next surviving step. Time dropped after the last survivor is
  added to that survivor, so each sequence keeps its total duration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from liquidbench.data.batch import SequenceBatch, SequenceDataset
from liquidbench.evaluation import EVAL_BATCH, evaluate
from liquidbench.metrics import MetricsReport
from liquidbench.model import Model
from liquidbench.rng import RngStream

log = logging.getLogger(__name__)

DROPOUT_MODES = ("zero_fill", "drop_merge_dt")
DEFAULT_RATES = (0.0, 0.3, 0.5, 0.7)


@dataclass(frozen=True)
class StressPlan:
    rates: tuple = DEFAULT_RATES
    mode: str = "zero_fill"
    trials: int = 5
    base_seed: int = 0

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "rates", rates)
        if not rates:
            raise ValueError("a stress plan needs at least one rate")
        if any(not 0.0 <= r < 1.0 for r in rates):
            raise ValueError(f"rates must lie in [0, 1), got {rates}")
        if list(rates) != sorted(set(rates)):
            raise ValueError(f"rates must be sorted ascending and unique, got {rates}")
        if self.mode not in DROPOUT_MODES:
            raise ValueError(f"mode must be one of {DROPOUT_MODES}, got {self.mode!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass
class RateSummary:
    rate: float
    median: float
    q1: float
    q3: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


@dataclass
class StressResult:
    plan: StressPlan
    reports: dict = field(default_factory=dict)    # (rate, trial) -> MetricsReport
    aggregate: list = field(default_factory=list)  # RateSummary per rate
    monotone: bool = True

    def rows(self) -> list[tuple[float, int, float]]:
        """``(rate, trial, accuracy)`` in plan order."""
        return [(r, t, rep.accuracy) for (r, t), rep in sorted(self.reports.items())]

    def to_dict(self) -> dict:
        return {
            "plan": {"rates": list(self.plan.rates), "mode": self.plan.mode,
                     "trials": self.plan.trials, "base_seed": self.plan.base_seed},
            "trials": [{"rate": r, "trial": t, **rep.to_dict()}
                       for (r, t), rep in sorted(self.reports.items())],
            "aggregate": [{"rate": s.rate, "median": s.median, "q1": s.q1, "q3": s.q3,
                           "iqr": s.iqr} for s in self.aggregate],
            "monotone": self.monotone,
        }


def drop_pattern(n_valid: int, rate: float, rng: RngStream) -> np.ndarray:
    """Boolean keep-vector over ``n_valid`` steps with at least one survivor.

    All-dropped draws are discarded and redrawn from the same stream.
    """
    if n_valid == 0:
        return np.zeros(0, dtype=bool)
    while True:
        keep = ~rng.bernoulli(rate, n_valid).astype(bool)
        if keep.any():
            return keep


def merge_dt(dts: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Elapsed times of the survivors in ``keep`` after merging dropped steps.

    Each survivor absorbs the run of dropped steps just before it; a trailing
    run goes to the last survivor.
    """
    keep = np.asarray(keep, dtype=bool)
    n_keep = int(keep.sum())
    merged = np.zeros(n_keep)
    if n_keep == 0:
        return merged
    group = np.cumsum(keep[::-1])[::-1]
    owner = np.where(group == 0, n_keep - 1, n_keep - group)
    np.add.at(merged, owner, np.asarray(dts, dtype=np.float64))
    return merged


def apply_temporal_dropout(batch: SequenceBatch, rate: float, mode: str,
                           seed: int | RngStream) -> SequenceBatch:
    """Drop each valid step with probability ``rate``, row by row.

    Row ``i`` draws from ``seed`` split by ``i``, so a row's pattern does not
    depend on the other rows in the batch.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must lie in [0, 1), got {rate}")
    if mode not in DROPOUT_MODES:
        raise ValueError(f"mode must be one of {DROPOUT_MODES}, got {mode!r}")
    if rate == 0.0:
        return batch
    root = seed if isinstance(seed, RngStream) else RngStream(int(seed), "temporal_dropout")
    B, T, D = batch.inputs.shape
    valid = batch.mask > 0
    if mode == "zero_fill":
        inputs = batch.inputs.copy()
        mask = batch.mask.copy()
        for i in range(B):
            idx = np.flatnonzero(valid[i])
            keep = drop_pattern(len(idx), rate, root.split(i))
            gone = idx[~keep]
            inputs[i, gone] = 0.0
            mask[i, gone] = 0.0
        return SequenceBatch(inputs, batch.delta_t.copy(), mask, batch.targets)

    rows = []
    for i in range(B):
        idx = np.flatnonzero(valid[i])
        keep = drop_pattern(len(idx), rate, root.split(i))
        rows.append((batch.inputs[i, idx[keep]], merge_dt(batch.delta_t[i, idx], keep)))
    width = max(1, max(len(m) for _, m in rows))
    inputs = np.zeros((B, width, D))
    delta_t = np.ones((B, width))
    mask = np.zeros((B, width))
    for i, (x, dt) in enumerate(rows):
        n = len(dt)
        inputs[i, :n] = x
        delta_t[i, :n] = dt
        mask[i, :n] = 1.0
    return SequenceBatch(inputs, delta_t, mask, batch.targets)


def _quartiles(values) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75])
    return float(med), float(q1), float(q3)


def run_stress_sweep(model: Model, dataset: SequenceDataset, plan: StressPlan,
                     batch_size: int = EVAL_BATCH) -> StressResult:
    """Evaluate every ``(rate, trial)``; rate 0 is one plain evaluation."""
    if len(dataset) == 0:
        raise ValueError("cannot stress an empty dataset")
    result = StressResult(plan)
    root = RngStream(plan.base_seed, "stress")
    for rate in plan.rates:
        if rate == 0.0:
            result.reports[(rate, 0)] = evaluate(model, dataset, batch_size)
            continue
        for trial in range(plan.trials):
            trial_rng = root.split(f"{rate!r}/{trial}")

            def transform(batch, index, _rng=trial_rng, _rate=rate):
                return apply_temporal_dropout(batch, _rate, plan.mode, _rng.split(index))

            result.reports[(rate, trial)] = evaluate(
                model, dataset, batch_size, transform,
                run_meta={"rate": rate, "trial": trial, "mode": plan.mode})
    for rate in plan.rates:
        accs = [rep.accuracy for (r, _), rep in sorted(result.reports.items()) if r == rate]
        med, q1, q3 = _quartiles(accs)
        result.aggregate.append(RateSummary(rate, med, q1, q3))
    medians = [s.median for s in result.aggregate]
    result.monotone = all(b <= a for a, b in zip(medians, medians[1:]))
    if not result.monotone:
        log.warning("median accuracy is not non-increasing in the drop rate: %s",
                    ", ".join(f"{s.rate:g}:{s.median:.4f}" for s in result.aggregate))
    return result
