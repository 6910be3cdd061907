"""Event-camera streams: the 5-byte record layout and temporal binning.

Record layout (big-endian, 40 bits)::

    byte 0        x
    byte 1        y
    byte 2 bit 7  polarity
    bits 22..0    timestamp in microseconds (low 7 bits of byte 2, bytes 3-4)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from liquidbench.data.errors import ParseError

RECORD_BYTES = 5
MAX_TIMESTAMP = (1 << 23) - 1
DEFAULT_SENSOR = (34, 34)


@dataclass
class EventStream:
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    sensor_dims: tuple[int, int] = DEFAULT_SENSOR
    label: int | None = None

    def __len__(self) -> int:
        return len(self.t)

    def validate(self) -> None:
        width, height = self.sensor_dims
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event field arrays differ in length")
        if n and (self.x.min() < 0 or self.x.max() >= width or self.y.min() < 0 or self.y.max() >= height):
            raise ValueError(f"event coordinates outside sensor {self.sensor_dims}")
        if n > 1 and np.any(np.diff(self.t) < 0):
            raise ValueError("event timestamps must be nondecreasing")
        if n and not np.all((self.p == 0) | (self.p == 1)):
            raise ValueError("polarity must be 0 or 1")


def parse_event_file(data: bytes, sensor_dims: tuple[int, int] = DEFAULT_SENSOR,
                     label: int | None = None) -> EventStream:
    """Decode a binary event file. Raises :class:`ParseError` on bad input."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise ParseError("event data must be bytes", type=type(data).__name__)
    n_bytes = len(data)
    if n_bytes % RECORD_BYTES:
        whole = n_bytes - n_bytes % RECORD_BYTES
        raise ParseError("truncated event record", offset=whole, length=n_bytes)
    raw = np.frombuffer(bytes(data), dtype=np.uint8).reshape(-1, RECORD_BYTES).astype(np.int64)
    x, y = raw[:, 0], raw[:, 1]
    p = raw[:, 2] >> 7
    t = ((raw[:, 2] & 0x7F) << 16) | (raw[:, 3] << 8) | raw[:, 4]
    width, height = sensor_dims
    bad = np.flatnonzero((x >= width) | (y >= height))
    if bad.size:
        i = int(bad[0])
        raise ParseError("event coordinate outside sensor bounds", event=i,
                         offset=i * RECORD_BYTES, x=int(x[i]), y=int(y[i]))
    back = np.flatnonzero(np.diff(t) < 0)
    if back.size:
        i = int(back[0]) + 1
        raise ParseError("event timestamps decrease", event=i, offset=i * RECORD_BYTES)
    return EventStream(x, y, t, p, tuple(sensor_dims), label)


def read_event_file(path, sensor_dims: tuple[int, int] = DEFAULT_SENSOR,
                    label: int | None = None) -> EventStream:
    return parse_event_file(Path(path).read_bytes(), sensor_dims, label)


def encode_events(stream: EventStream) -> bytes:
    """Inverse of :func:`parse_event_file`."""
    x = np.asarray(stream.x, dtype=np.int64)
    y = np.asarray(stream.y, dtype=np.int64)
    t = np.asarray(stream.t, dtype=np.int64)
    p = np.asarray(stream.p, dtype=np.int64)
    if len(t) and (x.min() < 0 or x.max() > 255 or y.min() < 0 or y.max() > 255):
        raise ValueError("coordinates must fit in one byte")
    if len(t) and (t.min() < 0 or t.max() > MAX_TIMESTAMP):
        raise ValueError(f"timestamps must lie in [0, {MAX_TIMESTAMP}]")
    out = np.empty((len(t), RECORD_BYTES), dtype=np.uint8)
    out[:, 0] = x
    out[:, 1] = y
    out[:, 2] = (p << 7) | (t >> 16)
    out[:, 3] = (t >> 8) & 0xFF
    out[:, 4] = t & 0xFF
    return out.tobytes()


def bin_events(stream: EventStream, bins: int = 10, t_range: tuple[int, int] | None = None) -> np.ndarray:
    """Accumulate events into ``(bins, 2, H, W)`` frames holding ``log1p(count)``.

    Bins split ``[t_min, t_max]`` into equal windows, each half-open except
    the last, which also takes ``t_max``. Channel 0 is polarity 0 (OFF).
    ``t_range`` fixes the window; otherwise the observed span is used and an
    empty stream is an error.
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    width, height = stream.sensor_dims
    frames = np.zeros((bins, 2, height, width))
    n = len(stream)
    if t_range is None:
        if n == 0:
            raise ValueError("cannot bin an empty event stream without t_range")
        t0, t1 = int(stream.t.min()), int(stream.t.max())
    else:
        t0, t1 = t_range
        if t1 < t0:
            raise ValueError("t_range must be increasing")
    if n == 0:
        return frames
    t = np.asarray(stream.t, dtype=np.float64)
    span = t1 - t0
    if span > 0:
        idx = np.floor((t - t0) / span * bins).astype(np.int64)
    else:
        idx = np.full(n, bins - 1)
    keep = (t >= t0) & (t <= t1)
    idx = np.clip(idx, 0, bins - 1)
    np.add.at(frames, (idx[keep], stream.p[keep], stream.y[keep], stream.x[keep]), 1.0)
    return np.log1p(frames)
