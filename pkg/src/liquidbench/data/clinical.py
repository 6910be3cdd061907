"""Irregularly sampled clinical records.

File layout: delimited text (``,`` or ``|``), one row per observation: time
in hours, then 39 value columns, ``NA`` (or an empty cell) for missing. An
optional 41st column carries a per-row 0/1 label; the record is positive if
any row is, and the first positive row's time is taken as onset. A
non-numeric first line is treated as a header.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from liquidbench.data.errors import ParseError

N_VARIABLES = 39
MISSING = "NA"
IMPUTATIONS = ("forward_fill_zero",)


@dataclass
class ClinicalSeries:
    times: np.ndarray   # (N,) hours, strictly increasing
    values: np.ndarray  # (N, 39), NaN where missing
    label: int = 0
    onset_time: float | None = None

    def validate(self) -> None:
        if len(self.times) == 0:
            raise ValueError("clinical series is empty")
        if self.values.shape != (len(self.times), N_VARIABLES):
            raise ValueError(f"values must be ({len(self.times)}, {N_VARIABLES}), got {self.values.shape}")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("observation times must be strictly increasing")
        if np.all(np.isnan(self.values)):
            raise ValueError("series has no observed values")


def _cell(token: str, line_no: int, col: int) -> float:
    token = token.strip()
    if token in (MISSING, ""):
        return np.nan
    try:
        v = float(token)
    except ValueError:
        raise ParseError("not a number", line=line_no, column=col, value=token[:40]) from None
    if not np.isfinite(v):
        raise ParseError("non-finite value", line=line_no, column=col)
    return v


def parse_clinical(text: str) -> ClinicalSeries:
    lines = [(i, ln) for i, ln in enumerate(text.splitlines(), 1) if ln.strip()]
    if not lines:
        raise ParseError("empty clinical file")
    delim = "|" if "|" in lines[0][1] else ","
    first = lines[0][1].split(delim)[0].strip()
    try:
        float(first)
    except ValueError:
        lines = lines[1:]
    if not lines:
        raise ParseError("clinical file has a header but no rows")
    times, rows, labels = [], [], []
    for line_no, line in lines:
        cells = line.split(delim)
        if len(cells) not in (N_VARIABLES + 1, N_VARIABLES + 2):
            raise ParseError(f"expected {N_VARIABLES + 1} or {N_VARIABLES + 2} columns, got {len(cells)}",
                             line=line_no)
        t = _cell(cells[0], line_no, 0)
        if np.isnan(t):
            raise ParseError("missing time", line=line_no, column=0)
        if times and t <= times[-1]:
            raise ParseError("times must be strictly increasing", line=line_no, column=0)
        times.append(t)
        rows.append([_cell(c, line_no, j) for j, c in enumerate(cells[1:N_VARIABLES + 1], 1)])
        if len(cells) == N_VARIABLES + 2:
            lab = _cell(cells[-1], line_no, N_VARIABLES + 1)
            if lab not in (0.0, 1.0):
                raise ParseError("label must be 0 or 1", line=line_no, column=N_VARIABLES + 1)
            labels.append(int(lab))
    values = np.asarray(rows)
    if np.all(np.isnan(values)):
        raise ParseError("series has no observed values")
    label = int(any(labels))
    onset = float(times[labels.index(1)]) if label else None
    return ClinicalSeries(np.asarray(times), values, label, onset)


def read_clinical(path) -> ClinicalSeries:
    return parse_clinical(Path(path).read_text())


def format_clinical(series: ClinicalSeries, with_labels: bool = True) -> str:
    header = ["time"] + [f"v{i}" for i in range(N_VARIABLES)] + (["label"] if with_labels else [])
    out = [",".join(header)]
    for i, t in enumerate(series.times):
        cells = [repr(float(t))] + [MISSING if np.isnan(v) else repr(float(v)) for v in series.values[i]]
        if with_labels:
            positive = series.label and series.onset_time is not None and t >= series.onset_time
            cells.append("1" if positive else "0")
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def encode_clinical(series: ClinicalSeries, imputation: str = "forward_fill_zero") -> tuple[np.ndarray, np.ndarray]:
    """Return ``(features (N, 40), delta_t (N,))``.

    Features are the 39 values, forward-filled with never-seen values set to
    0, plus the hours since the previous observation (0 for the first). The
    returned ``delta_t`` drives the recurrent cell and uses 1 for the first
    step, where no gap is defined.
    """
    if imputation not in IMPUTATIONS:
        raise ValueError(f"imputation must be one of {IMPUTATIONS}")
    if len(series.times) == 0:
        raise ValueError("cannot encode an empty series")
    vals = np.array(series.values, dtype=np.float64)
    last = np.zeros(N_VARIABLES)
    for i in range(len(vals)):
        seen = ~np.isnan(vals[i])
        last = np.where(seen, vals[i], last)
        vals[i] = last
    gaps = np.diff(np.asarray(series.times, dtype=np.float64), prepend=series.times[0])
    features = np.concatenate([vals, gaps[:, None]], axis=1)
    delta_t = gaps.copy()
    delta_t[0] = 1.0
    return features, delta_t
