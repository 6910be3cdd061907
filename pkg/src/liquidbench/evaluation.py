"""Batched losses, predictions and metrics for every head type."""

from __future__ import annotations

from typing import Callable

import numpy as np

from liquidbench import losses
from liquidbench.autograd import Tensor
from liquidbench.data.batch import SequenceBatch, SequenceDataset
from liquidbench.metrics import MetricsReport, classify_metrics, corpus_cer
from liquidbench.model import Model
from liquidbench.rng import RngStream

EVAL_BATCH = 256

BatchTransform = Callable[[SequenceBatch, int], SequenceBatch]


def batch_loss(model: Model, batch: SequenceBatch, train: bool = False,
               rng: RngStream | None = None) -> tuple[Tensor, Tensor]:
    """Return ``(loss, logits)`` for one batch under the model's head."""
    out = model.forward(batch, train=train, rng=rng)
    head = model.config.head
    if head == "softmax_classes":
        return losses.cross_entropy(out.logits, batch.targets), out.logits
    if head == "binary_logit":
        return losses.binary_cross_entropy(out.logits, batch.targets), out.logits
    loss, _ = losses.ctc_loss_batch(out.logits, batch.targets, batch.lengths())
    return loss, out.logits


def decode(model: Model, logits: np.ndarray, batch: SequenceBatch) -> list:
    """Class ids, 0/1 decisions, or label sequences, one per row."""
    head = model.config.head
    if head == "softmax_classes":
        return np.argmax(logits, axis=1).tolist()
    if head == "binary_logit":
        return (logits[:, 0] > 0).astype(np.int64).tolist()
    lengths = batch.lengths()
    return [losses.ctc_greedy_decode(logits[b, :lengths[b]]) for b in range(batch.batch_size)]


def report(model: Model, predictions: list, targets: list, run_meta: dict | None = None) -> MetricsReport:
    """Metrics for decoded predictions.

    Sequence heads report exact-match accuracy and corpus CER; their
    precision, recall and F1 are undefined and listed as degenerate.
    """
    head = model.config.head
    if head == "softmax_classes":
        return classify_metrics(predictions, targets, model.config.n_out, run_meta)
    if head == "binary_logit":
        return classify_metrics(predictions, targets, 2, run_meta)
    n = len(targets)
    exact = sum(list(p) == list(t) for p, t in zip(predictions, targets))
    return MetricsReport(
        accuracy=exact / n if n else 0.0, precision=0.0, recall=0.0, f1=0.0,
        confusion=[], support=[], n=n, cer=corpus_cer(predictions, targets),
        degenerate=["precision", "recall", "f1"], run_meta=dict(run_meta or {}),
    )


def predict(model: Model, dataset: SequenceDataset, batch_size: int = EVAL_BATCH,
            transform: BatchTransform | None = None) -> list:
    """Decoded predictions in dataset order.

    ``transform(batch, batch_index)`` may rewrite each batch before the
    forward pass; the stress protocol uses it to drop steps.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    preds: list = []
    for i, batch in enumerate(dataset.batches(batch_size)):
        if transform is not None:
            batch = transform(batch, i)
        logits = model.forward(batch).logits.data
        preds.extend(decode(model, logits, batch))
    return preds


def evaluate(model: Model, dataset: SequenceDataset, batch_size: int = EVAL_BATCH,
             transform: BatchTransform | None = None, run_meta: dict | None = None) -> MetricsReport:
    preds = predict(model, dataset, batch_size, transform)
    return report(model, preds, list(dataset.targets), run_meta)


def primary_metric(model: Model, rep: MetricsReport) -> float:
    """CER for sequence heads (lower is better), accuracy otherwise."""
    return rep.cer if model.config.head == "ctc_vocab" else rep.accuracy


def higher_is_better(model: Model) -> bool:
    return model.config.head != "ctc_vocab"
