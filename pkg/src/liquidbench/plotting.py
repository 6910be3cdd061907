"""PNG figures for training logs and stress sweeps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_PNG_META = {"Software": None}


def training_curves(history: list, path, metric_name: str = "accuracy") -> Path:
    """Loss and train/val metric per epoch, side by side."""
    epochs = [r[0] for r in history]
    fig, (ax_loss, ax_metric) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(epochs, [r[1] for r in history], marker="o", ms=3)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss")
    ax_metric.plot(epochs, [r[2] for r in history], marker="o", ms=3, label="train")
    ax_metric.plot(epochs, [r[3] for r in history], marker="s", ms=3, label="val")
    ax_metric.set_xlabel("epoch")
    ax_metric.set_ylabel(metric_name)
    ax_metric.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return Path(path)


def stress_curve(result, path, label: str = "model") -> Path:
    """Median accuracy per drop rate with the interquartile band."""
    rates = [s.rate for s in result.aggregate]
    med = [s.median for s in result.aggregate]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.fill_between(rates, [s.q1 for s in result.aggregate], [s.q3 for s in result.aggregate],
                    alpha=0.25)
    ax.plot(rates, med, marker="o", label=label)
    for (r, _), rep in sorted(result.reports.items()):
        ax.plot(r, rep.accuracy, ".", color="gray", ms=4)
    ax.set_xlabel("drop rate")
    ax.set_ylabel("accuracy")
    ax.set_title(f"temporal dropout ({result.plan.mode})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return Path(path)
