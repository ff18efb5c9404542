"""Reader for IDX image files (the MNIST distribution format)."""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803


class IdxFormatError(ValueError):
    pass


class IdxLengthError(IdxFormatError):
    pass


def parse_idx_images(data: bytes) -> np.ndarray:
    """Images as a ``(count, rows, cols)`` uint8 array."""
    if len(data) < 16:
        raise IdxLengthError(f"IDX header needs 16 bytes, got {len(data)}")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(f"bad IDX magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")
    expected = count * rows * cols
    body = data[16:]
    if len(body) != expected:
        raise IdxLengthError(
            f"IDX header promises {count}x{rows}x{cols} = {expected} bytes, file has {len(body)}"
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)


def load_idx_images(path: str | Path) -> np.ndarray:
    return parse_idx_images(Path(path).read_bytes())


def write_idx_images(path: str | Path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IMAGE_MAGIC, count, rows, cols) + images.tobytes())


def downsample(image: np.ndarray, side: int) -> np.ndarray:
    """Block-average a square image down to ``side x side``."""
    rows, cols = image.shape
    if rows % side or cols % side:
        raise ValueError(f"cannot pool a {rows}x{cols} image to {side}x{side}")
    return image.reshape(side, rows // side, side, cols // side).mean(axis=(1, 3))


def image_signal(image: np.ndarray, n: int | None = None) -> np.ndarray:
    """Pixels scaled to [0, 1], optionally pooled to n pixels, flattened to unit norm."""
    img = np.asarray(image, dtype=float) / 255.0
    if n is not None and n != img.size:
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise ValueError(f"n = {n} is not a square image size")
        img = downsample(img, side)
    v = img.ravel()
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("blank image cannot be normalized")
    return v / norm


def signal_image(v: np.ndarray) -> np.ndarray:
    """Inverse view for display: a square 8-bit image of |v| scaled to its max."""
    side = int(round(np.sqrt(v.size)))
    a = np.abs(np.asarray(v, dtype=float)).reshape(side, side)
    top = a.max()
    if top > 0:
        a = a / top
    return np.round(a * 255).astype(np.uint8)


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Binary P5 greymap."""
    img = np.asarray(image, dtype=np.uint8)
    rows, cols = img.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n255\n".encode() + img.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError("not a binary PGM file")
    cols, rows = int(m.group(1)), int(m.group(2))
    return np.frombuffer(data[m.end(): m.end() + rows * cols], dtype=np.uint8).reshape(rows, cols)
