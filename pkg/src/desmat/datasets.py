"""Readers for IDX (MNIST-style) and binary PGM images.

Pixels are returned as floats scaled to ``[0, 1]``.
"""
from __future__ import annotations

import gzip
import os
import struct
from pathlib import Path

import numpy as np

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


class DatasetParseError(ValueError):
    def __init__(self, path, offset: int, message: str):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.path = str(path)
        self.offset = offset


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def read_idx(path) -> np.ndarray:
    """Raw uint8 array from an IDX file (images ``(N, rows, cols)`` or labels ``(N,)``)."""
    data = _read_bytes(path)
    if len(data) < 4:
        raise DatasetParseError(path, len(data), "truncated magic number")
    magic = struct.unpack(">I", data[:4])[0]
    if magic == IDX_IMAGES:
        ndim = 3
    elif magic == IDX_LABELS:
        ndim = 1
    else:
        raise DatasetParseError(path, 0, f"bad magic 0x{magic:08x}")
    hdr = 4 + 4 * ndim
    if len(data) < hdr:
        raise DatasetParseError(path, len(data), "truncated dimension header")
    dims = struct.unpack(">" + "I" * ndim, data[4:hdr])
    size = int(np.prod(dims))
    if len(data) < hdr + size:
        raise DatasetParseError(path, len(data), f"truncated payload, expected {hdr + size} bytes")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=hdr).reshape(dims)


def load_idx_images(path) -> np.ndarray:
    raw = read_idx(path)
    if raw.ndim != 3:
        raise DatasetParseError(path, 0, "file holds labels, not images")
    return raw.astype(float) / 255.0


def load_idx_labels(path) -> np.ndarray:
    raw = read_idx(path)
    if raw.ndim != 1:
        raise DatasetParseError(path, 0, "file holds images, not labels")
    return raw.astype(np.int64)


def _pgm_token(data: bytes, pos: int, path) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise DatasetParseError(path, pos, "truncated PGM header")
    return data[start:pos], pos


def load_pgm(path) -> np.ndarray:
    data = _read_bytes(path)
    if data[:2] != b"P5":
        raise DatasetParseError(path, 0, "not a binary PGM (P5) file")
    pos = 2
    vals = []
    for _ in range(3):
        tok, pos = _pgm_token(data, pos, path)
        try:
            vals.append(int(tok))
        except ValueError:
            raise DatasetParseError(path, pos - len(tok), f"bad header field {tok!r}") from None
    width, height, maxval = vals
    if not 0 < maxval < 65536:
        raise DatasetParseError(path, pos, f"bad maxval {maxval}")
    pos += 1  # single whitespace before the raster
    bpp = 1 if maxval < 256 else 2
    need = width * height * bpp
    if len(data) < pos + need:
        raise DatasetParseError(path, len(data), f"truncated raster, expected {pos + need} bytes")
    dtype = np.uint8 if bpp == 1 else np.dtype(">u2")
    img = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return img.reshape(height, width).astype(float) / maxval


def save_pgm(path, image) -> None:
    """Write ``image`` (values in [0, 1], clipped) as an 8-bit P5 file."""
    img = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    raw = np.round(img * 255).astype(np.uint8)
    h, w = raw.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raw.tobytes())


def load_dataset(path, kind: str) -> np.ndarray:
    """Image collection of shape ``(N, rows, cols)``."""
    kind = kind.upper()
    if kind == "IDX":
        return load_idx_images(path)
    if kind == "PGM":
        return load_pgm(path)[None, :, :]
    raise ValueError(f"unknown dataset kind {kind!r}")


def write_idx(path, array: np.ndarray, compress: bool = False) -> None:
    """Write a uint8 array as IDX (3-D images or 1-D labels)."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    if arr.ndim == 3:
        magic = IDX_IMAGES
    elif arr.ndim == 1:
        magic = IDX_LABELS
    else:
        raise ValueError("IDX writer supports 1-D labels or 3-D images")
    payload = struct.pack(">I", magic) + struct.pack(">" + "I" * arr.ndim, *arr.shape) + arr.tobytes()
    if compress:
        with open(path, "wb") as raw:
            with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as fh:
                fh.write(payload)
    else:
        with open(path, "wb") as fh:
            fh.write(payload)


def default_data_dir() -> Path:
    env = os.environ.get("DESMAT_DATA")
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data"
