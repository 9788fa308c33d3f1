"""Binary dataset files.

``LPT1`` holds a float32 tensor: magic, u64 rank, u64 extents, payload, all
little-endian.  ``LPB1`` holds bitvectors: magic, u64 count, u64 width, then
each vector packed LSB-first into ``ceil(width / 8)`` bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


def _read_exact(data: bytes, offset: int, n: int, what: str) -> bytes:
    if offset + n > len(data):
        raise FormatError(f"truncated file while reading {what}")
    return data[offset : offset + n]


def tensor_bytes(x) -> bytes:
    x = np.ascontiguousarray(x, dtype="<f4")
    head = b"LPT1" + struct.pack("<Q", x.ndim) + struct.pack(f"<{x.ndim}Q", *x.shape)
    return head + x.tobytes()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    if _read_exact(data, 0, 4, "magic") != b"LPT1":
        raise FormatError("not an LPT1 tensor file")
    (rank,) = struct.unpack("<Q", _read_exact(data, 4, 8, "rank"))
    shape = struct.unpack(f"<{rank}Q", _read_exact(data, 12, 8 * rank, "extents"))
    offset = 12 + 8 * rank
    count = int(np.prod(shape, dtype=np.int64))
    payload = _read_exact(data, offset, 4 * count, "payload")
    if len(data) != offset + 4 * count:
        raise FormatError("trailing bytes after tensor payload")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)


def bits_bytes(bits) -> bytes:
    b = np.asarray(bits, dtype=np.uint8)
    if b.ndim != 2:
        raise ValueError("bitvector file needs a (count, width) array")
    if ((b != 0) & (b != 1)).any():
        raise ValueError("bitvectors must be 0/1")
    packed = np.packbits(b, axis=1, bitorder="little") if b.shape[1] else np.zeros((len(b), 0), np.uint8)
    return b"LPB1" + struct.pack("<QQ", *b.shape) + packed.tobytes()


def bits_from_bytes(data: bytes) -> np.ndarray:
    if _read_exact(data, 0, 4, "magic") != b"LPB1":
        raise FormatError("not an LPB1 bitvector file")
    count, width = struct.unpack("<QQ", _read_exact(data, 4, 16, "header"))
    row = (width + 7) // 8
    payload = _read_exact(data, 20, count * row, "payload")
    if len(data) != 20 + count * row:
        raise FormatError("trailing bytes after bitvector payload")
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(count, row)
    return np.unpackbits(packed, axis=1, count=width, bitorder="little").astype(np.uint8)


def save_tensor(path, x):
    Path(path).write_bytes(tensor_bytes(x))


def load_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def save_bits(path, bits):
    Path(path).write_bytes(bits_bytes(bits))


def load_bits(path) -> np.ndarray:
    return bits_from_bytes(Path(path).read_bytes())
