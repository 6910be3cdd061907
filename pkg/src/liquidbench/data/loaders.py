"""Resolve a task name or path to a :class:`SequenceDataset`.

* a synthetic task kind (see :mod:`liquidbench.data.synth`);
* a ``.ndjson``/``.jsonl`` stroke file, classes taken from ``label`` or
  from the sorted set of ``word`` values;
* a directory of class subdirectories holding binary event files
  (``*.bin``), class ids following the sorted subdirectory names;
* a directory of clinical record files (``*.psv``, ``*.csv``).

Unreadable records are skipped with a warning; a source with no usable
record is an error.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from liquidbench.data.batch import SequenceDataset
from liquidbench.data.clinical import encode_clinical, read_clinical
from liquidbench.data.errors import ParseError
from liquidbench.data.events import DEFAULT_SENSOR, bin_events, read_event_file
from liquidbench.data.strokes import parse_stroke_ndjson
from liquidbench.data.synth import TASK_KINDS, synth_task

log = logging.getLogger(__name__)

EVENT_SUFFIXES = (".bin",)
CLINICAL_SUFFIXES = (".psv", ".csv")
STROKE_SUFFIXES = (".ndjson", ".jsonl")


def task_family(task: str) -> str:
    """``task`` itself for synthetic kinds, else ``strokes``, ``events`` or ``clinical``."""
    if task in TASK_KINDS:
        return task
    p = Path(task)
    if p.is_file() and p.suffix in STROKE_SUFFIXES:
        return "strokes"
    if p.is_dir():
        if any(c.is_dir() for c in p.iterdir()):
            return "events"
        if any(f.suffix in CLINICAL_SUFFIXES for f in p.iterdir()):
            return "clinical"
    raise ValueError(f"{task!r} is neither a task kind {TASK_KINDS} nor a readable dataset path")


def load_strokes(path, dims: int = 5) -> SequenceDataset:
    result = parse_stroke_ndjson(Path(path).read_bytes())
    if result.skipped:
        log.warning("%s: skipped %d malformed line(s), first: line %d: %s", path,
                    result.n_skipped, *result.skipped[0])
    seqs = result.sequences
    words = sorted({s.word for s in seqs if s.label is None and s.word is not None})
    index = {w: i for i, w in enumerate(words)}
    xs, targets = [], []
    for s in seqs:
        label = s.label if s.label is not None else index.get(s.word)
        if label is None:
            continue
        xs.append(s.features(dims))
        targets.append(int(label))
    if not xs:
        raise ValueError(f"{path}: no labelled drawings")
    return SequenceDataset("strokes", xs, [np.ones(len(x)) for x in xs], targets, "class",
                           max(targets) + 1, {"classes": words})


def load_events(root, bins: int = 10, sensor_dims: tuple[int, int] = DEFAULT_SENSOR) -> SequenceDataset:
    classes = sorted(c.name for c in Path(root).iterdir() if c.is_dir())
    xs, targets, bad = [], [], 0
    for label, name in enumerate(classes):
        for f in sorted((Path(root) / name).iterdir()):
            if f.suffix not in EVENT_SUFFIXES:
                continue
            try:
                stream = read_event_file(f, sensor_dims, label)
                frames = bin_events(stream, bins)
            except (ParseError, ValueError) as exc:
                bad += 1
                log.warning("%s: %s", f, exc)
                continue
            xs.append(frames.reshape(bins, -1))
            targets.append(label)
    if bad:
        log.warning("%s: skipped %d unreadable event file(s)", root, bad)
    if not xs:
        raise ValueError(f"{root}: no readable event files")
    return SequenceDataset("events", xs, [np.ones(bins) for _ in xs], targets, "class",
                           len(classes), {"classes": classes, "bins": bins})


def load_clinical(root) -> SequenceDataset:
    xs, dts, targets, bad = [], [], [], 0
    for f in sorted(Path(root).iterdir()):
        if f.suffix not in CLINICAL_SUFFIXES:
            continue
        try:
            series = read_clinical(f)
        except ParseError as exc:
            bad += 1
            log.warning("%s: %s", f, exc)
            continue
        x, dt = encode_clinical(series)
        xs.append(x)
        dts.append(dt)
        targets.append(series.label)
    if bad:
        log.warning("%s: skipped %d unreadable record(s)", root, bad)
    if not xs:
        raise ValueError(f"{root}: no readable clinical records")
    return SequenceDataset("clinical", xs, dts, targets, "binary", 2, {})


def load_task(task: str, seed: int, n: int) -> SequenceDataset:
    """``n`` only applies to synthetic tasks; files are loaded whole."""
    family = task_family(task)
    if family in TASK_KINDS:
        return synth_task(task, seed, n)
    if family == "strokes":
        return load_strokes(task)
    if family == "events":
        return load_events(task)
    return load_clinical(task)
