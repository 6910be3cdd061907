"""Seeded desk-scale tasks standing in for the full benchmark datasets.

``irregular_sine_class``
    Classify the frequency of a sine observed at Poisson-spaced times with
    Gaussian noise. Inputs per step: ``(value, elapsed time)``.
``event_digits_mini``
    3x5 digit glyphs scaled 2x on a 12x12 sensor, moved through three
    straight saccades. A moving edge fires ON events on its leading side and
    OFF events on its trailing side, plus uniform noise events. Streams go
    through the binary codec and are binned into 10 log-compressed frames.
``stroke_shapes``
    Ten parametric shapes drawn as pen strokes (circle, square, ...), jittered
    and rotated, converted to ``(dx, dy, x, y, pen)`` points.
``sepsis_like``
    39 standardized variables at irregular hourly-ish times with heavy
    missingness; positive records drift in six variables after onset.
    Exactly ``round(positive_rate * n)`` records are positive.
``tone_sequence``
    Runs of noisy one-hot "tones" separated by silence; the target is the
    tone sequence (CTC task).
"""

from __future__ import annotations

import numpy as np

from liquidbench.data.batch import SequenceDataset
from liquidbench.data.clinical import N_VARIABLES, ClinicalSeries, encode_clinical
from liquidbench.data.events import EventStream, bin_events, encode_events, parse_event_file
from liquidbench.data.strokes import drawing_to_sequence
from liquidbench.rng import RngStream

TASK_KINDS = ("irregular_sine_class", "event_digits_mini", "stroke_shapes", "sepsis_like",
              "tone_sequence")


def _balanced_labels(rng: RngStream, n: int, k: int) -> np.ndarray:
    return (np.arange(n) % k)[rng.permutation(n)]


def _rng_for(kind: str, seed: int) -> RngStream:
    return RngStream(seed).split("data").split(kind)


# ---------------------------------------------------------------- sine

def irregular_sine_class(seed: int, n: int, n_classes: int = 2, noise: float = 0.1,
                         length: int = 32, mean_gap: float = 0.25,
                         base_freq: float = 0.25) -> SequenceDataset:
    """Class ``c`` oscillates at ``base_freq * (c + 1)`` cycles per time unit."""
    rng = _rng_for("irregular_sine_class", seed)
    labels = _balanced_labels(rng.split("labels"), n, n_classes)
    xs, dts = [], []
    for i in range(n):
        r = rng.split(i)
        gaps = np.maximum(r.exponential(length, scale=mean_gap), 1e-3)
        t = np.cumsum(gaps)
        phase = r.uniform(low=0.0, high=2 * np.pi)
        freq = base_freq * (labels[i] + 1)
        v = np.sin(2 * np.pi * freq * t + phase) + noise * r.normal(length)
        xs.append(np.stack([v, gaps], axis=1))
        dts.append(gaps)
    meta = {"freqs": [base_freq * (c + 1) for c in range(n_classes)], "noise": noise}
    return SequenceDataset("irregular_sine_class", xs, dts, labels.tolist(), "class", n_classes, meta)


# ---------------------------------------------------------------- events

_DIGITS = [
    "111101101101111", "010110010010111", "111001111100111", "111001111001111",
    "101101111001001", "111100111001111", "111100111101111", "111001001001001",
    "111101111101111", "111101111001111",
]
SENSOR = 12
SACCADES = ((1, 1), (-1, 0), (0, -1))
WINDOW_US = 300_000


def digit_glyph(d: int) -> np.ndarray:
    """10x6 boolean glyph (3x5 font scaled by two)."""
    g = np.array([int(c) for c in _DIGITS[d]], dtype=bool).reshape(5, 3)
    return np.kron(g, np.ones((2, 2), dtype=bool))


def _edge_pixels(glyph: np.ndarray, direction: tuple[int, int]):
    """Leading (ON) and trailing (OFF) edge pixels for a motion direction."""
    dx, dy = direction
    padded = np.pad(glyph, 1)
    ahead = padded[1 + dy:1 + dy + glyph.shape[0], 1 + dx:1 + dx + glyph.shape[1]]
    behind = padded[1 - dy:1 - dy + glyph.shape[0], 1 - dx:1 - dx + glyph.shape[1]]
    lead = np.argwhere(glyph & ~ahead)
    trail = np.argwhere(glyph & ~behind)
    return lead, trail


def digit_event_stream(rng: RngStream, digit: int, n_events: int = 120,
                       noise_frac: float = 0.15) -> EventStream:
    glyph = digit_glyph(digit)
    gh, gw = glyph.shape
    ox = 1 + rng.integers(SENSOR - gw - 2)
    oy = rng.integers(SENSOR - gh - 1)
    t = np.sort(rng.integers(WINDOW_US, n_events))
    seg = np.minimum(t * len(SACCADES) // WINDOW_US, len(SACCADES) - 1)
    is_noise = rng.uniform(n_events) < noise_frac
    pick = rng.uniform(n_events)
    coin = rng.uniform(n_events)
    nx = rng.integers(SENSOR, n_events)
    ny = rng.integers(SENSOR, n_events)
    xs = np.empty(n_events, dtype=np.int64)
    ys = np.empty(n_events, dtype=np.int64)
    ps = np.empty(n_events, dtype=np.int64)
    shift = np.zeros(2, dtype=np.int64)
    seg_len = WINDOW_US / len(SACCADES)
    for s, direction in enumerate(SACCADES):
        lead, trail = _edge_pixels(glyph, direction)
        for i in np.flatnonzero(seg == s):
            if is_noise[i]:
                xs[i], ys[i], ps[i] = nx[i], ny[i], int(coin[i] < 0.5)
                continue
            progress = (t[i] - s * seg_len) / seg_len
            off = shift + np.round(np.array(direction) * progress).astype(np.int64)
            on = coin[i] < 0.5
            px = lead if on else trail
            r_, c_ = px[int(pick[i] * len(px))]
            xs[i] = np.clip(ox + c_ + off[0], 0, SENSOR - 1)
            ys[i] = np.clip(oy + r_ + off[1], 0, SENSOR - 1)
            ps[i] = int(on)
        shift = shift + np.array(direction)
    return EventStream(xs, ys, t, ps, (SENSOR, SENSOR), digit)


def event_digits_mini(seed: int, n: int, n_classes: int = 10, bins: int = 10,
                      n_events: int = 400, noise_frac: float = 0.15) -> SequenceDataset:
    rng = _rng_for("event_digits_mini", seed)
    labels = _balanced_labels(rng.split("labels"), n, n_classes)
    xs, dts = [], []
    for i in range(n):
        stream = digit_event_stream(rng.split(i), int(labels[i]), n_events, noise_frac)
        # round-trip through the on-disk codec so the parser sees real bytes
        stream = parse_event_file(encode_events(stream), (SENSOR, SENSOR), stream.label)
        frames = bin_events(stream, bins, t_range=(0, WINDOW_US - 1))
        xs.append(frames.reshape(bins, -1))
        dts.append(np.ones(bins))
    meta = {"sensor": SENSOR, "bins": bins, "n_events": n_events}
    return SequenceDataset("event_digits_mini", xs, dts, labels.tolist(), "class", n_classes, meta)


# ---------------------------------------------------------------- strokes

SHAPES = ("circle", "square", "triangle", "line", "zigzag", "spiral", "star", "cross", "wave", "house")


def _polyline(corners, per_edge: int) -> np.ndarray:
    corners = np.asarray(corners, dtype=np.float64)
    pts = [corners[0]]
    for a, b in zip(corners[:-1], corners[1:]):
        for s in range(1, per_edge + 1):
            pts.append(a + (b - a) * s / per_edge)
    return np.asarray(pts)


def _shape_strokes(name: str, r: RngStream) -> list[np.ndarray]:
    m = 3 + r.integers(3)
    if name == "circle":
        th = np.linspace(0, 2 * np.pi, 16 + r.integers(8))
        return [np.stack([np.cos(th), np.sin(th)], axis=1)]
    if name == "square":
        return [_polyline([(-1, -1), (1, -1), (1, 1), (-1, 1), (-1, -1)], m)]
    if name == "triangle":
        return [_polyline([(-1, -0.8), (1, -0.8), (0, 1), (-1, -0.8)], m)]
    if name == "line":
        return [_polyline([(-1, -1), (1, 1)], 6 + r.integers(6))]
    if name == "zigzag":
        k = 4 + r.integers(3)
        xs = np.linspace(-1, 1, k + 1)
        ys = np.where(np.arange(k + 1) % 2 == 0, -0.5, 0.5)
        return [_polyline(np.stack([xs, ys], axis=1), 2)]
    if name == "spiral":
        th = np.linspace(0, 4 * np.pi, 24 + r.integers(8))
        rad = th / th[-1]
        return [np.stack([rad * np.cos(th), rad * np.sin(th)], axis=1)]
    if name == "star":
        ang = np.pi / 2 + np.arange(6) * 4 * np.pi / 5
        return [_polyline(np.stack([np.cos(ang), np.sin(ang)], axis=1), 2)]
    if name == "cross":
        return [_polyline([(-1, 0), (1, 0)], m), _polyline([(0, -1), (0, 1)], m)]
    if name == "wave":
        xs = np.linspace(-1, 1, 20 + r.integers(8))
        return [np.stack([xs, 0.5 * np.sin(2 * np.pi * xs)], axis=1)]
    # house: box then roof
    return [_polyline([(-1, -1), (1, -1), (1, 0.3), (-1, 0.3), (-1, -1)], m),
            _polyline([(-1, 0.3), (0, 1), (1, 0.3)], m)]


def random_drawing(r: RngStream, shape: str) -> list:
    """Integer-coordinate drawing on a 256 canvas, as stored in ndjson files."""
    strokes = _shape_strokes(shape, r.split("shape"))
    angle = r.uniform(low=-0.3, high=0.3)
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    scale = r.uniform(low=60.0, high=110.0) * np.array([1.0, r.uniform(low=0.8, high=1.2)])
    center = 128 + r.uniform(2, low=-10.0, high=10.0)
    drawing = []
    for s in strokes:
        p = s @ rot.T * scale + center + r.normal(s.shape, scale=2.5)
        p = np.clip(np.round(p), 0, 255).astype(int)
        drawing.append([p[:, 0].tolist(), p[:, 1].tolist()])
    return drawing


def stroke_shapes(seed: int, n: int, n_classes: int = 10, dims: int = 5) -> SequenceDataset:
    if not 1 <= n_classes <= len(SHAPES):
        raise ValueError(f"stroke_shapes supports up to {len(SHAPES)} classes")
    rng = _rng_for("stroke_shapes", seed)
    labels = _balanced_labels(rng.split("labels"), n, n_classes)
    xs, dts = [], []
    for i in range(n):
        drawing = random_drawing(rng.split(i), SHAPES[labels[i]])
        seq = drawing_to_sequence(drawing, int(labels[i]), SHAPES[labels[i]])
        xs.append(seq.features(dims))
        dts.append(np.ones(len(seq.points)))
    return SequenceDataset("stroke_shapes", xs, dts, labels.tolist(), "class", n_classes,
                           {"shapes": list(SHAPES[:n_classes]), "dims": dims})


# ---------------------------------------------------------------- clinical

N_VITALS = 8
DRIFT_VARS = (0, 2, 4, 6, 12, 20)
DRIFT_SIGN = (1.0, 1.0, -1.0, 1.0, 1.0, 1.0)


def sepsis_series(r: RngStream, positive: bool) -> ClinicalSeries:
    length = 12 + r.integers(37)
    gaps = np.maximum(r.exponential(length, scale=1.0), 0.05)
    times = np.cumsum(gaps)
    obs_p = np.where(np.arange(N_VARIABLES) < N_VITALS, 0.85, 0.15)
    baseline = r.normal(N_VARIABLES, scale=0.5)
    values = baseline + r.normal((length, N_VARIABLES), scale=0.5)
    onset = None
    if positive:
        onset = float(times[length // 2 + r.integers(max(1, length // 2 - 2))])
        since = np.maximum(times - onset, 0.0)
        slope = r.uniform(low=0.15, high=0.4)
        for v, sign in zip(DRIFT_VARS, DRIFT_SIGN):
            values[:, v] += sign * slope * since
    observed = r.uniform((length, N_VARIABLES)) < obs_p
    observed[np.arange(length), r.integers(N_VITALS, length)] = True
    values = np.where(observed, values, np.nan)
    return ClinicalSeries(times, values, int(positive), onset)


def sepsis_like(seed: int, n: int, positive_rate: float = 0.1) -> SequenceDataset:
    if not 0.0 <= positive_rate <= 1.0:
        raise ValueError("positive_rate must be in [0, 1]")
    rng = _rng_for("sepsis_like", seed)
    n_pos = int(round(positive_rate * n))
    labels = (np.arange(n) < n_pos).astype(np.int64)[rng.split("labels").permutation(n)]
    xs, dts = [], []
    for i in range(n):
        series = sepsis_series(rng.split(i), bool(labels[i]))
        x, dt = encode_clinical(series)
        xs.append(x)
        dts.append(dt)
    return SequenceDataset("sepsis_like", xs, dts, labels.tolist(), "binary", 2,
                           {"positive_rate": positive_rate})


# ---------------------------------------------------------------- CTC tones

def tone_sequence(seed: int, n: int, vocab: int = 4, max_tones: int = 3,
                  noise: float = 0.3) -> SequenceDataset:
    rng = _rng_for("tone_sequence", seed)
    xs, dts, targets = [], [], []
    for i in range(n):
        r = rng.split(i)
        n_tones = 1 + r.integers(max_tones)
        symbols = (1 + r.integers(vocab, n_tones)).tolist()
        rows = [np.zeros((1 + r.integers(2), vocab))]
        for s in symbols:
            seg = np.zeros((3 + r.integers(3), vocab))
            seg[:, s - 1] = 1.0
            rows.append(seg)
            rows.append(np.zeros((1 + r.integers(2), vocab)))
        x = np.concatenate(rows)
        xs.append(x + noise * r.normal(x.shape))
        dts.append(np.ones(len(x)))
        targets.append(symbols)
    return SequenceDataset("tone_sequence", xs, dts, targets, "sequence", vocab, {"vocab": vocab})


_GENERATORS = {
    "irregular_sine_class": irregular_sine_class,
    "event_digits_mini": event_digits_mini,
    "stroke_shapes": stroke_shapes,
    "sepsis_like": sepsis_like,
    "tone_sequence": tone_sequence,
}


def synth_task(kind: str, seed: int, n: int, **options) -> SequenceDataset:
    """Generate ``n`` records of task ``kind``; identical for identical arguments."""
    if kind not in _GENERATORS:
        raise ValueError(f"unknown task kind {kind!r}; expected one of {TASK_KINDS}")
    if n < 10:
        raise ValueError(f"n must be >= 10, got {n}")
    return _GENERATORS[kind](seed, n, **options)
