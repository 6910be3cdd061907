"""Stroke drawings from newline-delimited JSON.

Each line is an object whose ``drawing`` is a list of strokes, a stroke
being ``[xs, ys]`` (an optional third timing list is ignored). The class
comes from an integer ``label`` field, or from ``word`` looked up in
``classes``.

Points become ``(dx, dy, x, y, pen)`` rows where ``pen = 1`` marks the last
point of a stroke (pen lifted) and ``(dx, dy)`` is the offset from the
previous point, the first point being offset from the origin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PEN_DOWN, PEN_UP = 0.0, 1.0


@dataclass
class StrokeSequence:
    points: np.ndarray  # (N, 5): dx, dy, x, y, pen
    label: int | None = None
    word: str | None = None

    def features(self, dims: int = 5) -> np.ndarray:
        if dims == 5:
            return self.points
        if dims == 3:
            return self.points[:, [0, 1, 4]]
        raise ValueError(f"stroke features are 5- or 3-dimensional, got {dims}")


@dataclass
class StrokeParseResult:
    sequences: list[StrokeSequence]
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_skipped(self) -> int:
        return len(self.skipped)


def _coords(values, line_field: str) -> list[float]:
    if not isinstance(values, list):
        raise ValueError(f"{line_field} must be a list")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"{line_field} holds a non-number")
        f = float(v)
        if not math.isfinite(f):
            raise ValueError(f"{line_field} holds a non-finite number")
        out.append(f)
    return out


def drawing_to_sequence(drawing, label: int | None = None, word: str | None = None,
                        normalize: bool = True) -> StrokeSequence:
    """Convert ``[[xs, ys], ...]`` strokes into one point sequence.

    With ``normalize`` the drawing is shifted to the origin and scaled by its
    larger side, so coordinates land in ``[0, 1]`` with the aspect ratio kept.
    """
    if not isinstance(drawing, list) or not drawing:
        raise ValueError("empty drawing")
    xs, ys, pen = [], [], []
    for i, stroke in enumerate(drawing):
        if not isinstance(stroke, list) or len(stroke) < 2:
            raise ValueError(f"stroke {i} must be [xs, ys]")
        sx = _coords(stroke[0], f"stroke {i} xs")
        sy = _coords(stroke[1], f"stroke {i} ys")
        if len(sx) != len(sy):
            raise ValueError(f"stroke {i} has {len(sx)} xs but {len(sy)} ys")
        if not sx:
            raise ValueError(f"stroke {i} is empty")
        xs.extend(sx)
        ys.extend(sy)
        pen.extend([PEN_DOWN] * (len(sx) - 1) + [PEN_UP])
    x = np.asarray(xs)
    y = np.asarray(ys)
    if normalize:
        x = x - x.min()
        y = y - y.min()
        scale = max(x.max(), y.max())
        if scale > 0:
            x = x / scale
            y = y / scale
    dx = np.diff(x, prepend=0.0)
    dy = np.diff(y, prepend=0.0)
    points = np.stack([dx, dy, x, y, np.asarray(pen)], axis=1)
    return StrokeSequence(points, label, word)


def parse_stroke_ndjson(text, classes: Sequence[str] | None = None,
                        normalize: bool = True) -> StrokeParseResult:
    """Parse every line; malformed lines are skipped and reported, never raised."""
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    class_index = {c: i for i, c in enumerate(classes)} if classes is not None else None
    result = StrokeParseResult([])
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise ValueError("record is not an object")
            label = record.get("label")
            word = record.get("word")
            if word is not None and not isinstance(word, str):
                raise ValueError("word must be a string")
            if label is not None:
                if isinstance(label, bool) or not isinstance(label, int) or label < 0:
                    raise ValueError("label must be a nonnegative integer")
            elif word is not None and class_index is not None:
                if word not in class_index:
                    raise ValueError(f"unknown class {word!r}")
                label = class_index[word]
            if "drawing" not in record:
                raise ValueError("missing drawing")
            seq = drawing_to_sequence(record["drawing"], label, word, normalize)
        except (ValueError, TypeError, RecursionError) as exc:
            result.skipped.append((line_no, str(exc)[:200]))
            continue
        result.sequences.append(seq)
    return result


def to_ndjson(drawings: Sequence, words: Sequence[str] | None = None) -> str:
    lines = []
    for i, d in enumerate(drawings):
        rec = {"drawing": d}
        if words is not None:
            rec["word"] = words[i]
        lines.append(json.dumps(rec))
    return "\n".join(lines) + "\n"
