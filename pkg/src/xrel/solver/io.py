"""Binary field dumps.

Layout: magic ``XRLF1``, little-endian u32 ``d``, ``m``, then ``d`` sizes, then
float64 little-endian cell data, row-major with cells outer and matrix entries
inner.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"XRLF1"


def field_bytes(data: np.ndarray, d: int, m: int) -> bytes:
    data = np.asarray(data, dtype="<f8")
    sizes = data.shape[:d]
    head = MAGIC + struct.pack(f"<{2 + d}I", d, m, *sizes)
    return head + np.ascontiguousarray(data).tobytes()


def write_field(path, data: np.ndarray, d: int, m: int) -> None:
    with open(path, "wb") as fh:
        fh.write(field_bytes(data, d, m))


def read_field(path):
    """Return ``(d, m, sizes, data)``; the per-cell shape is q x q when the size allows it."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:5] != MAGIC:
        raise ValueError("not an XRLF1 field dump")
    d, m = struct.unpack_from("<2I", raw, 5)
    sizes = struct.unpack_from(f"<{d}I", raw, 13)
    off = 13 + 4 * d
    vals = np.frombuffer(raw, dtype="<f8", offset=off)
    ncells = int(np.prod(sizes))
    per = vals.size // ncells
    if per * ncells != vals.size:
        raise ValueError("field dump size does not match its header")
    q = d * m
    tail = (q, q) if per == q * q else (q,) if per == q else (per,)
    return d, m, tuple(sizes), vals.reshape(tuple(sizes) + tail).copy()
