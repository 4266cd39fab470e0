"""Signal prior models.

Every prior exposes the same small interface:

* ``first_moment`` / ``second_moment`` / ``centered_variance``
* ``outer_rule(order)``: nodes and weights for expectations over the prior
* ``sample(rng, size)``
* ``mmse(mu, v)``: posterior mean and variance under a Gaussian observation
  ``mu = x + sqrt(v) z``
* ``default_regularizer()``: the l1 regularizer matched to the prior, used
  when a MAP decoder needs a density and the prior has atoms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.polynomial.laguerre import laggauss
from scipy.special import log_ndtr, logsumexp

from .quadrature import gauss_hermite

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class DegeneratePosteriorError(ArithmeticError):
    """Posterior normalizer vanished or curvature is non-positive."""


def _log_normal_pdf(x, var):
    return -0.5 * np.square(x) / var - 0.5 * np.log(var) - _LOG_SQRT_2PI


def _mixture_moments(logw, means, variances):
    """Collapse a finite mixture (components on the last axis) to mean/variance."""
    w = np.exp(logw - logsumexp(logw, axis=-1, keepdims=True))
    m = np.sum(w * means, axis=-1)
    second = np.sum(w * (variances + np.square(means)), axis=-1)
    return m, np.maximum(second - np.square(m), 0.0)


def _scalar_out(mean, var):
    if np.ndim(mean) == 0:
        return float(mean), float(var)
    return mean, var


@dataclass(frozen=True)
class SpikeDiscrete:
    """``x = amplitude`` with probability ``sparsity``, else 0.

    With ``symmetric=True`` the nonzero value is ``+-amplitude`` with equal
    probability.
    """

    sparsity: float
    amplitude: float = 1.0
    symmetric: bool = False

    def __post_init__(self):
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in [0, 1]")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        p, c = self.sparsity, self.amplitude
        if self.symmetric:
            vals = np.array([-c, 0.0, c])
            probs = np.array([p / 2, 1.0 - p, p / 2])
        else:
            vals = np.array([0.0, c])
            probs = np.array([1.0 - p, p])
        keep = probs > 0
        return vals[keep], probs[keep]

    def first_moment(self) -> float:
        return 0.0 if self.symmetric else self.sparsity * self.amplitude

    def second_moment(self) -> float:
        return self.sparsity * self.amplitude**2

    def centered_variance(self) -> float:
        return self.second_moment() - self.first_moment() ** 2

    def outer_rule(self, order: int = 0):
        return self.atoms()

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        vals, probs = self.atoms()
        return rng.choice(vals, size=size, p=probs)

    def mmse(self, mu, v):
        vals, probs = self.atoms()
        if vals.size == 1:
            shape = np.broadcast(np.asarray(mu), np.asarray(v)).shape
            return _scalar_out(np.full(shape, vals[0])[()], np.zeros(shape)[()])
        mu = np.asarray(mu, dtype=float)[..., None]
        v = np.asarray(v, dtype=float)[..., None]
        if np.any(v <= 0):
            # v == 0 is only meaningful when mu hits an atom; use the nearest
            logw = np.where(v > 0, np.log(probs) - np.square(mu - vals) / (2 * np.where(v > 0, v, 1.0)),
                            np.where(np.isclose(mu, vals), 0.0, -np.inf))
        else:
            logw = np.log(probs) - np.square(mu - vals) / (2 * v)
        m, var = _mixture_moments(logw, np.broadcast_to(vals, logw.shape), 0.0)
        return _scalar_out(m, var)

    def default_regularizer(self) -> "Laplacian":
        if not 0 < self.sparsity < 1:
            raise ValueError("l1 calibration needs 0 < sparsity < 1")
        return Laplacian(np.log(1.0 / self.sparsity) / self.amplitude)


@dataclass(frozen=True)
class Laplacian:
    """Density ``(beta/2) exp(-beta |x|)``."""

    beta: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    def first_moment(self) -> float:
        return 0.0

    def second_moment(self) -> float:
        return 2.0 / self.beta**2

    def centered_variance(self) -> float:
        return self.second_moment()

    def log_density(self, x):
        return np.log(self.beta / 2) - self.beta * np.abs(x)

    def outer_rule(self, order: int = 80):
        t, w = laggauss(order)
        s = t / self.beta
        return np.concatenate([-s[::-1], s]), np.concatenate([w[::-1], w]) / 2.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.laplace(0.0, 1.0 / self.beta, size=size)

    def mmse(self, mu, v):
        mu = np.asarray(mu, dtype=float)
        v = np.asarray(v, dtype=float)
        if np.any(v <= 0):
            raise DegeneratePosteriorError("MMSE map needs v > 0")
        b = self.beta
        sd = np.sqrt(v)
        # positive half: N(mu - b v, v) truncated to x > 0
        cp = mu - b * v
        ap = cp / sd
        lp = log_ndtr(ap)
        rp = np.exp(_log_normal_pdf(ap, 1.0) - lp)
        mp = cp + sd * rp
        vp = v * (1.0 - rp * (ap + rp))
        # negative half: N(mu + b v, v) truncated to x < 0
        cn = mu + b * v
        an = -cn / sd
        ln = log_ndtr(an)
        rn = np.exp(_log_normal_pdf(an, 1.0) - ln)
        mn = cn - sd * rn
        vn = v * (1.0 - rn * (an + rn))
        logw = np.stack([-b * mu + lp, b * mu + ln], axis=-1)
        m, var = _mixture_moments(logw, np.stack([mp, mn], axis=-1),
                                  np.maximum(np.stack([vp, vn], axis=-1), 0.0))
        return _scalar_out(m, var)

    def default_regularizer(self) -> "Laplacian":
        return self


@dataclass(frozen=True)
class Gaussian:
    """Zero-mean normal prior."""

    variance: float

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("variance must be positive")

    def first_moment(self) -> float:
        return 0.0

    def second_moment(self) -> float:
        return self.variance

    def centered_variance(self) -> float:
        return self.variance

    def log_density(self, x):
        return _log_normal_pdf(np.asarray(x, dtype=float), self.variance)

    def outer_rule(self, order: int = 61):
        z, w = gauss_hermite(order)
        return np.sqrt(self.variance) * z, np.array(w)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(0.0, np.sqrt(self.variance), size=size)

    def mmse(self, mu, v):
        t = self.variance
        mu = np.asarray(mu, dtype=float)
        v = np.asarray(v, dtype=float)
        return _scalar_out(mu * t / (t + v), v * t / (t + v) + 0.0 * mu)

    def default_regularizer(self):
        return self


@dataclass(frozen=True)
class SparseGaussian:
    """Mixture ``sparsity * N(mean, variance) + (1 - sparsity) * delta_0``."""

    sparsity: float
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in [0, 1]")
        if self.variance <= 0:
            raise ValueError("variance must be positive")

    def first_moment(self) -> float:
        return self.sparsity * self.mean

    def second_moment(self) -> float:
        return self.sparsity * (self.variance + self.mean**2)

    def centered_variance(self) -> float:
        return self.second_moment() - self.first_moment() ** 2

    def outer_rule(self, order: int = 61):
        z, w = gauss_hermite(order)
        vals = np.concatenate([[0.0], self.mean + np.sqrt(self.variance) * z])
        probs = np.concatenate([[1.0 - self.sparsity], self.sparsity * np.asarray(w)])
        keep = probs > 0
        return vals[keep], probs[keep]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        on = rng.random(size) < self.sparsity
        return np.where(on, rng.normal(self.mean, np.sqrt(self.variance), size=size), 0.0)

    def mmse(self, mu, v):
        mu = np.asarray(mu, dtype=float)
        v = np.asarray(v, dtype=float)
        if np.any(v <= 0):
            raise DegeneratePosteriorError("MMSE map needs v > 0")
        p, m0, t = self.sparsity, self.mean, self.variance
        with np.errstate(divide="ignore"):
            logw = np.stack([np.log(1 - p) + _log_normal_pdf(mu, v),
                             np.log(p) + _log_normal_pdf(mu - m0, t + v)], axis=-1)
        slab_mean = (mu * t + m0 * v) / (t + v)
        slab_var = t * v / (t + v)
        means = np.stack([np.zeros_like(slab_mean), slab_mean], axis=-1)
        varis = np.stack([np.zeros_like(slab_mean), np.broadcast_to(slab_var, slab_mean.shape)], axis=-1)
        m, var = _mixture_moments(logw, means, varis)
        return _scalar_out(m, var)

    def default_regularizer(self) -> Laplacian:
        if not 0 < self.sparsity < 1:
            raise ValueError("l1 calibration needs 0 < sparsity < 1")
        scale = np.sqrt(self.variance + self.mean**2)
        return Laplacian(np.log(1.0 / self.sparsity) / scale)


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Density tabulated on a uniform grid, normalized by the trapezoid rule."""

    grid: np.ndarray
    densities: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        d = np.asarray(self.densities, dtype=float)
        if g.ndim != 1 or g.shape != d.shape or g.size < 3:
            raise ValueError("grid and densities must be matching 1-D arrays of length >= 3")
        step = np.diff(g)
        if not np.allclose(step, step[0], rtol=1e-9, atol=0):
            raise ValueError("grid must be uniform")
        if np.any(d < 0):
            raise ValueError("densities must be non-negative")
        total = np.trapezoid(d, g)
        if total <= 0:
            raise ValueError("densities integrate to zero")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "densities", d / total)

    @classmethod
    def from_function(cls, pdf, lo: float, hi: float, points: int = 2001) -> "Tabulated":
        g = np.linspace(lo, hi, points)
        return cls(g, pdf(g))

    @property
    def _weights(self) -> np.ndarray:
        h = self.grid[1] - self.grid[0]
        w = np.full(self.grid.size, h) * self.densities
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def first_moment(self) -> float:
        return float(np.sum(self._weights * self.grid))

    def second_moment(self) -> float:
        return float(np.sum(self._weights * self.grid**2))

    def centered_variance(self) -> float:
        return self.second_moment() - self.first_moment() ** 2

    def log_density(self, x):
        with np.errstate(divide="ignore"):
            return np.log(np.interp(x, self.grid, self.densities, left=0.0, right=0.0))

    def outer_rule(self, order: int = 0):
        w = self._weights
        keep = w > 0
        return self.grid[keep], w[keep]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        # inverse CDF on the piecewise-constant cell masses
        w = self._weights
        cdf = np.cumsum(w)
        cdf /= cdf[-1]
        return np.interp(rng.random(size), cdf, self.grid)

    def mmse(self, mu, v):
        mu = np.asarray(mu, dtype=float)
        v = np.asarray(v, dtype=float)
        if np.any(v <= 0):
            raise DegeneratePosteriorError("MMSE map needs v > 0")
        g = self.grid
        with np.errstate(divide="ignore"):
            logw = np.log(self._weights) - np.square(mu[..., None] - g) / (2 * v[..., None])
        if np.any(np.all(np.isneginf(logw), axis=-1)):
            raise DegeneratePosteriorError("posterior normalizer is zero")
        m, var = _mixture_moments(logw, np.broadcast_to(g, logw.shape), 0.0)
        return _scalar_out(m, var)

    def default_regularizer(self):
        return self


PriorModel = Union[SpikeDiscrete, Laplacian, Gaussian, SparseGaussian, Tabulated]


def has_density(prior: PriorModel) -> bool:
    return isinstance(prior, (Laplacian, Gaussian, Tabulated))
