"""Evaluation metrics: classification scores, confusion matrices, CER."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    a, b = list(a), list(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def cer(predicted: Sequence, reference: Sequence) -> float:
    """Edit distance normalized by the reference length."""
    if len(reference) == 0:
        raise ValueError("CER is undefined for an empty reference")
    return edit_distance(predicted, reference) / len(reference)


def corpus_cer(predicted: Sequence[Sequence], references: Sequence[Sequence]) -> float:
    """Total edits over total reference length."""
    total = sum(len(r) for r in references)
    if total == 0:
        raise ValueError("CER is undefined for empty references")
    return sum(edit_distance(p, r) for p, r in zip(predicted, references)) / total


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: list
    support: list
    n: int
    false_positives: int | None = None
    cer: float | None = None
    degenerate: list = field(default_factory=list)
    run_meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(predictions, targets, k: int) -> np.ndarray:
    p = np.asarray(predictions, dtype=np.int64)
    t = np.asarray(targets, dtype=np.int64)
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def _ratio(num: float, den: float) -> tuple[float, bool]:
    return (num / den, False) if den else (0.0, True)


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def classify_metrics(predictions, targets, k: int, run_meta: dict | None = None) -> MetricsReport:
    """Rows of the confusion matrix are true classes, columns predictions.

    With ``k == 2`` precision/recall/F1 describe class 1 and the false-positive
    count is reported; otherwise they are macro averages. Undefined ratios
    (0/0) are reported as 0 and named in ``degenerate``.
    """
    p = np.asarray(predictions, dtype=np.int64)
    t = np.asarray(targets, dtype=np.int64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError(f"predictions {p.shape} and targets {t.shape} must be equal-length vectors")
    if p.size and (min(p.min(), t.min()) < 0 or max(p.max(), t.max()) >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    cm = confusion_matrix(p, t, k)
    n = int(cm.sum())
    accuracy = float(np.trace(cm)) / n if n else 0.0
    degenerate = []
    if k == 2:
        tp, fp, fn = int(cm[1, 1]), int(cm[0, 1]), int(cm[1, 0])
        precision, bad_p = _ratio(tp, tp + fp)
        recall, bad_r = _ratio(tp, tp + fn)
        if bad_p:
            degenerate.append("precision")
        if bad_r:
            degenerate.append("recall")
        f1 = _f1(precision, recall)
        fps = fp
    else:
        ps, rs, fs = [], [], []
        for c in range(k):
            pc, bad_p = _ratio(int(cm[c, c]), int(cm[:, c].sum()))
            rc, bad_r = _ratio(int(cm[c, c]), int(cm[c, :].sum()))
            if bad_p:
                degenerate.append(f"precision[{c}]")
            if bad_r:
                degenerate.append(f"recall[{c}]")
            ps.append(pc)
            rs.append(rc)
            fs.append(_f1(pc, rc))
        precision, recall, f1 = sum(ps) / k, sum(rs) / k, sum(fs) / k
        fps = None
    return MetricsReport(
        accuracy=accuracy, precision=precision, recall=recall, f1=f1,
        confusion=cm.tolist(), support=cm.sum(axis=1).tolist(), n=n,
        false_positives=fps, degenerate=degenerate, run_meta=dict(run_meta or {}),
    )
