"""Reader for the big-endian IDX containers used by digit image datasets."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
UBYTE = 0x08


class IdxFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


def parse_idx(data: bytes, raw: bool = False) -> np.ndarray:
    """Decode an unsigned-byte IDX payload.

    Returns an array of the declared dimensions, scaled to [0, 1] unless
    ``raw`` is set (then the uint8 values are returned, e.g. for labels).
    """
    if len(data) < 4:
        raise IdxFormatError("file shorter than the magic number", len(data))
    if data[0] != 0 or data[1] != 0:
        raise IdxFormatError(f"bad magic 0x{data[:4].hex()}", 0)
    if data[2] != UBYTE:
        raise IdxFormatError(f"unsupported element type 0x{data[2]:02x}", 2)
    ndim = data[3]
    if ndim == 0:
        raise IdxFormatError("zero-dimensional payload", 3)
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IdxFormatError(f"truncated header, expected {ndim} dimension sizes", len(data))
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    count = int(np.prod(dims))
    if len(data) < header + count:
        raise IdxFormatError(f"truncated payload: need {count} bytes, have {len(data) - header}", len(data))
    if len(data) > header + count:
        raise IdxFormatError("trailing bytes after payload", header + count)
    values = np.frombuffer(data, dtype=np.uint8, count=count, offset=header).reshape(dims)
    return values.copy() if raw else values / 255.0


def read_idx(path, raw: bool = False) -> np.ndarray:
    return parse_idx(Path(path).read_bytes(), raw=raw)


def encode_idx(values: np.ndarray) -> bytes:
    """Inverse of :func:`parse_idx` for uint8 arrays."""
    values = np.asarray(values)
    if values.dtype != np.uint8:
        raise ValueError("IDX encoding supports uint8 payloads only")
    head = bytes([0, 0, UBYTE, values.ndim]) + struct.pack(f">{values.ndim}I", *values.shape)
    return head + values.tobytes()
