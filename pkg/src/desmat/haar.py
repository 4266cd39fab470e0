"""Orthonormal 2D Haar transform and coefficient partitioning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import HIGH, LOW

_S = 1.0 / np.sqrt(2.0)


class DimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HaarCoefficients:
    """Coarsest approximation plus per-level (horizontal, vertical, diagonal) details.

    ``details[0]`` is the finest level. Horizontal details respond to
    changes along a row (left/right differences).
    """

    approximation: np.ndarray
    details: tuple
    shape: tuple

    @property
    def levels(self) -> int:
        return len(self.details)


def _analysis_1level(x: np.ndarray):
    a = (x[0::2, :] + x[1::2, :]) * _S  # row pairs: low
    d = (x[0::2, :] - x[1::2, :]) * _S  # row pairs: high
    ll = (a[:, 0::2] + a[:, 1::2]) * _S
    lh = (a[:, 0::2] - a[:, 1::2]) * _S  # column differences -> horizontal detail
    hl = (d[:, 0::2] + d[:, 1::2]) * _S  # row differences -> vertical detail
    hh = (d[:, 0::2] - d[:, 1::2]) * _S
    return ll, (lh, hl, hh)


def _synthesis_1level(ll, lh, hl, hh):
    r, c = ll.shape
    a = np.empty((r, 2 * c))
    d = np.empty((r, 2 * c))
    a[:, 0::2] = (ll + lh) * _S
    a[:, 1::2] = (ll - lh) * _S
    d[:, 0::2] = (hl + hh) * _S
    d[:, 1::2] = (hl - hh) * _S
    x = np.empty((2 * r, 2 * c))
    x[0::2, :] = (a + d) * _S
    x[1::2, :] = (a - d) * _S
    return x


def haar2d_forward(image, levels: int = 1) -> HaarCoefficients:
    x = np.asarray(image, dtype=float)
    if x.ndim != 2:
        raise DimensionError("image must be 2-D")
    if levels < 1:
        raise DimensionError("levels must be >= 1")
    f = 2**levels
    if x.shape[0] % f or x.shape[1] % f:
        raise DimensionError(f"dimensions {x.shape} are not divisible by {f}")
    details = []
    cur = x
    for _ in range(levels):
        cur, det = _analysis_1level(cur)
        details.append(det)
    return HaarCoefficients(cur, tuple(details), x.shape)


def haar2d_inverse(coeffs: HaarCoefficients) -> np.ndarray:
    cur = np.asarray(coeffs.approximation, dtype=float)
    for lh, hl, hh in reversed(coeffs.details):
        if not (lh.shape == hl.shape == hh.shape == cur.shape):
            raise DimensionError("inconsistent block shapes")
        cur = _synthesis_1level(cur, lh, hl, hh)
    if cur.shape != tuple(coeffs.shape):
        raise DimensionError("reconstructed shape does not match the recorded shape")
    return cur


def partition_coefficients(coeffs: HaarCoefficients) -> tuple[np.ndarray, np.ndarray]:
    """Flatten row-major with the approximation block first.

    Returns the vector and per-entry labels (``HIGH`` for the approximation
    block, ``LOW`` for every detail block). Detail blocks follow coarsest
    level first, in (horizontal, vertical, diagonal) order.
    """
    parts = [coeffs.approximation.ravel()]
    for det in reversed(coeffs.details):
        parts.extend(b.ravel() for b in det)
    vec = np.concatenate(parts)
    labels = np.full(vec.size, LOW, dtype=np.int8)
    labels[:coeffs.approximation.size] = HIGH
    return vec, labels


def unpartition_coefficients(vec, like: HaarCoefficients) -> HaarCoefficients:
    """Inverse of :func:`partition_coefficients` using ``like`` for the block shapes."""
    vec = np.asarray(vec, dtype=float)
    if vec.size != int(np.prod(like.shape)):
        raise DimensionError("vector length does not match the coefficient layout")
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        out = vec[pos:pos + size].reshape(shape)
        pos += size
        return out

    approx = take(like.approximation.shape)
    details = []
    for det in reversed(like.details):
        details.append(tuple(take(b.shape) for b in det))
    return HaarCoefficients(approx, tuple(reversed(details)), like.shape)


def partition_sizes(shape, levels: int = 1) -> tuple[int, int]:
    r, c = shape
    f = 2**levels
    if r % f or c % f:
        raise DimensionError(f"dimensions {shape} are not divisible by {f}")
    n_h = (r // f) * (c // f)
    return n_h, r * c - n_h
