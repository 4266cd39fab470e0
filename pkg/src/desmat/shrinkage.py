"""Soft thresholding and the Laplacian (l1) variable-node map."""
from __future__ import annotations

import numpy as np


def prox(a, b):
    """Soft threshold ``sign(a) * max(|a| - b, 0)`` and its derivative in ``a``.

    The derivative at the kink ``|a| == b`` is taken as 0. Works elementwise
    on arrays and returns floats for scalar input.
    """
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(b_arr < 0):
        raise ValueError("threshold must be non-negative")
    active = np.abs(a_arr) > b_arr
    value = np.where(active, a_arr - np.sign(a_arr) * b_arr, 0.0)
    deriv = active.astype(float)
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def h_laplacian(mu, v, beta):
    """Variable-node map for the l1 regularizer ``beta * |x|``.

    Returns ``(prox(mu; beta*v), beta*v*prox'(mu; beta*v))``. The variance
    carries the factor ``beta`` so that the Lasso recursion reads
    ``V' = E[beta a2 V prox']``. ``v == 0`` gives ``(mu, 0)``.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr < 0):
        raise ValueError("variance must be non-negative")
    thr = beta * v_arr
    value, deriv = prox(mu, thr)
    return value, thr * deriv
