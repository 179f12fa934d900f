"""Flat binary checkpoints with a byte-for-byte deterministic layout.

Layout (all integers little-endian)::

    magic      8 bytes   b"PLNPT\\x00\\x01\\x00"
    seed       u64
    config     u32 length + UTF-8 text
    count      u32
    entries    count times, sorted by name:
                 u32 name length + UTF-8 name
                 u32 ndim, then ndim x u64 dims
                 prod(dims) x f64 values (C order)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"PLNPT\x00\x01\x00"


@dataclass
class Checkpoint:
    arrays: dict[str, np.ndarray]
    config_text: str
    seed: int


def encode_checkpoint(arrays: dict[str, np.ndarray], config_text: str, seed: int) -> bytes:
    parts = [MAGIC, struct.pack("<Q", seed)]
    cfg = config_text.encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        value = np.asarray(arrays[name], dtype="<f8", order="C")
        raw = name.encode("utf-8")
        parts += [struct.pack("<I", len(raw)), raw, struct.pack("<I", value.ndim)]
        parts += [struct.pack(f"<{value.ndim}Q", *value.shape), value.tobytes()]
    return b"".join(parts)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if blob[:8] != MAGIC:
        raise ValueError("not a checkpoint file (bad magic bytes)")
    pos = 8

    def read(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise ValueError("truncated checkpoint")
        out = struct.unpack_from(fmt, blob, pos)
        pos += size
        return out

    def read_bytes(n):
        nonlocal pos
        if pos + n > len(blob):
            raise ValueError("truncated checkpoint")
        out = blob[pos : pos + n]
        pos += n
        return out

    (seed,) = read("<Q")
    (cfg_len,) = read("<I")
    config_text = read_bytes(cfg_len).decode("utf-8")
    (count,) = read("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = read("<I")
        name = read_bytes(name_len).decode("utf-8")
        (ndim,) = read("<I")
        shape = read(f"<{ndim}Q") if ndim else ()
        n = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(read_bytes(8 * n), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(blob):
        raise ValueError(f"{len(blob) - pos} trailing bytes after checkpoint entries")
    return Checkpoint(arrays, config_text, seed)


def save_checkpoint(path, arrays: dict[str, np.ndarray], config_text: str, seed: int) -> None:
    Path(path).write_bytes(encode_checkpoint(arrays, config_text, seed))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
