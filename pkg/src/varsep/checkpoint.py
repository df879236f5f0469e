"""SVCK checkpoint container.

Layout (little-endian)::

    b"SVCK" | u16 version
    u32 n | config echo (n bytes UTF-8)
    u32 epoch | u64 optimizer step
    u32 tensor count, then per parameter:
        u16 n | name | u8 rank | u32 dims | f64 values
    first-moment values, then second-moment values (f64, same order)
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .training import OptimizerState

MAGIC = b"SVCK"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


@dataclass
class Checkpoint:
    config_text: str
    params: dict[str, np.ndarray]
    state: OptimizerState
    epoch: int


def dumps(ck: Checkpoint) -> bytes:
    buf = io.BytesIO()
    cfg = ck.config_text.encode("utf-8")
    buf.write(struct.pack("<4sHI", MAGIC, VERSION, len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<IQI", ck.epoch, ck.state.step, len(ck.params)))
    for name, arr in ck.params.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    for moments in (ck.state.m, ck.state.v):
        for name in ck.params:
            buf.write(np.ascontiguousarray(moments[name], dtype="<f8").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.off = data, 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.off + size > len(self.data):
            raise CheckpointFormatError(f"truncated checkpoint at byte {self.off}")
        out = struct.unpack_from(fmt, self.data, self.off)
        self.off += size
        return out

    def raw(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise CheckpointFormatError(f"truncated checkpoint at byte {self.off}")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def floats(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.raw(8 * n), dtype="<f8").reshape(shape).astype(np.float64)


def loads(data: bytes, **hyper) -> Checkpoint:
    """Decode a checkpoint; ``hyper`` sets the optimizer's lr/betas/eps."""
    r = _Reader(data)
    magic, version, n_cfg = r.take("<4sHI")
    if magic != MAGIC:
        raise CheckpointFormatError("not an SVCK file (bad magic)")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported SVCK version {version}")
    config_text = r.raw(n_cfg).decode("utf-8")
    epoch, step, count = r.take("<IQI")
    params = {}
    for _ in range(count):
        (n,) = r.take("<H")
        name = r.raw(n).decode("utf-8")
        (rank,) = r.take("<B")
        shape = r.take(f"<{rank}I")
        params[name] = r.floats(shape)
    m = {k: r.floats(v.shape) for k, v in params.items()}
    v = {k: r.floats(p.shape) for k, p in params.items()}
    if r.off != len(data):
        raise CheckpointFormatError(f"trailing bytes after byte {r.off}")
    return Checkpoint(config_text, params, OptimizerState(m, v, step, **hyper), epoch)


def save(ck: Checkpoint, path) -> None:
    Path(path).write_bytes(dumps(ck))


def load(path, **hyper) -> Checkpoint:
    return loads(Path(path).read_bytes(), **hyper)
