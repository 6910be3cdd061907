"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    magic     8 bytes  b"LQBCKPT\\0"
    version   u32
    meta_len  u32, then meta_len bytes of UTF-8 JSON (sorted keys)
    count     u32 tensors, each:
        name_len u32, name (UTF-8)
        ndim     u32, then ndim x u64 dims
        payload  prod(dims) x float64

JSON is written with sorted keys and ``repr`` floats, so loading and saving
again reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"LQBCKPT\0"
VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, truncated or incompatible checkpoint."""


@dataclass
class Checkpoint:
    meta: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        """Tensors under ``prefix/`` with the prefix stripped, in stored order."""
        p = prefix + "/"
        return {k[len(p):]: v for k, v in self.tensors.items() if k.startswith(p)}


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def to_bytes(ckpt: Checkpoint) -> bytes:
    meta = json.dumps(ckpt.meta, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta,
             struct.pack("<I", len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode()
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}Q", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {what} at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def from_bytes(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError("not a liquidbench checkpoint (bad magic bytes)")
    version, meta_len = r.unpack("<II", "header")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    try:
        meta = json.loads(r.take(meta_len, "metadata").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from None
    (count,) = r.unpack("<I", "tensor count")
    tensors = {}
    for i in range(count):
        (name_len,) = r.unpack("<I", f"tensor {i} name length")
        try:
            name = r.take(name_len, f"tensor {i} name").decode()
        except UnicodeDecodeError:
            raise CheckpointError(f"tensor {i} name is not UTF-8") from None
        (ndim,) = r.unpack("<I", f"{name} rank")
        shape = r.unpack(f"<{ndim}Q", f"{name} shape")
        n = int(np.prod(shape, dtype=np.int64))
        payload = r.take(8 * n, f"{name} payload")
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after the last tensor")
    return Checkpoint(meta, tensors)


def save(ckpt: Checkpoint, path) -> Path:
    """Write atomically (temporary file, then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    os.replace(tmp, path)
    return path


def load(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
