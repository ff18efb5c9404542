"""Flat binary array container.

Layout (all little-endian)::

    8 bytes   magic  b"HTOPT001"
    uint64    number of arrays
    per array:
      uint64          ndim
      uint64[ndim]    shape
      float64[prod]   data, C order

A JSON sidecar ``<path>.json`` carries names and metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HTOPT001"


class ContainerFormatError(ValueError):
    pass


def write_arrays(path: str | Path, arrays: list[np.ndarray], meta: dict | None = None) -> None:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<Q", len(arrays))]
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        chunks.append(struct.pack("<Q", a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        chunks.append(a.tobytes())
    path.write_bytes(b"".join(chunks))
    if meta is not None:
        sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_arrays(path: str | Path) -> list[np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ContainerFormatError(f"{path}: bad magic {buf[:8]!r}")
    pos = 8

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise ContainerFormatError(f"{path}: truncated")
        out = struct.unpack_from(fmt, buf, pos)
        pos += size
        return out

    (count,) = take("<Q")
    arrays = []
    for _ in range(count):
        (ndim,) = take("<Q")
        shape = take(f"<{ndim}Q") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        if pos + 8 * n > len(buf):
            raise ContainerFormatError(f"{path}: truncated")
        arrays.append(np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(shape).copy())
        pos += 8 * n
    if pos != len(buf):
        raise ContainerFormatError(f"{path}: {len(buf) - pos} trailing bytes")
    return arrays


def sidecar(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_meta(path: str | Path) -> dict:
    return json.loads(sidecar(path).read_text())
