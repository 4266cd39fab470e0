"""Quadrature rules for expectations over a standard normal variable.

Two rules are provided:

* Gauss-Hermite nodes rescaled to the standard normal measure, used for
  smooth integrands.
* A segmented Gauss-Legendre rule on ``[-cutoff, cutoff]`` that splits the
  line at known kinks of the integrand. Soft thresholding has two kinks,
  and a plain Gauss-Hermite rule only converges algebraically across them.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

# Standard-normal tail mass beyond 12 is ~2e-33.
Z_CUTOFF = 12.0
_SQRT_2PI = np.sqrt(2.0 * np.pi)


@lru_cache(maxsize=32)
def gauss_hermite(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``z`` and weights ``w`` with ``E f(Z) ~ sum(w * f(z))`` for Z ~ N(0,1)."""
    if order < 1:
        raise ValueError("order must be positive")
    z, w = hermegauss(order)
    w = w / _SQRT_2PI
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


@lru_cache(maxsize=32)
def _legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def normal_pdf(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


def segmented_normal_rule(kinks: np.ndarray, order: int,
                          cutoff: float = Z_CUTOFF) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature rule for ``E f(Z)`` when ``f`` is smooth between ``kinks``.

    ``kinks`` has shape ``(batch, K)`` (positions in z, any order, may lie
    outside the cutoff). Returns ``(z, w)`` of shape ``(batch, (K+1)*order)``;
    weights already include the normal density.
    """
    kinks = np.atleast_2d(np.asarray(kinks, dtype=float))
    batch = kinks.shape[0]
    edges = np.concatenate([
        np.full((batch, 1), -cutoff),
        np.sort(np.clip(kinks, -cutoff, cutoff), axis=1),
        np.full((batch, 1), cutoff),
    ], axis=1)
    lo, hi = edges[:, :-1], edges[:, 1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x, wl = _legendre(order)
    z = mid[:, :, None] + half[:, :, None] * x
    w = half[:, :, None] * wl * normal_pdf(z)
    return z.reshape(batch, -1), w.reshape(batch, -1)
