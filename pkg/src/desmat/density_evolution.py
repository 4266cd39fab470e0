"""Density evolution for Gaussian-approximated message passing.

The tracked state is the mean-squared deviation ``E`` of variable-to-check
messages from the truth and their average variance ``V`` (one pair per
partition for preferential ensembles). One step maps the state through the
check-node sums and then through the variable-node h-functions under an
outer expectation over the signal prior and a standard normal ``z``.
"""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, field, fields
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import ndtr

from .ensembles import GeneratingPolynomial, PreferentialEnsembleSpec
from .priors import (DegeneratePosteriorError, Gaussian, Laplacian, PriorModel,
                     SparseGaussian, SpikeDiscrete, Tabulated)
from .quadrature import gauss_hermite, normal_pdf, segmented_normal_rule
from .shrinkage import h_laplacian, prox

__all__ = [
    "DEConfig", "DEStateRegular", "DEStatePreferential", "EnsembleSummary", "DETrace",
    "ensemble_summary", "prox", "h_laplacian", "h_general_map", "h_mmse",
    "de_step_regular", "de_step_lasso", "de_step_gaussian", "de_step_preferential",
    "de_run", "preferential_b_terms", "NumericOverflowError",
]

DIVERGENCE_LIMIT = 1e12
ZERO_TOL = 1e-8


class NumericOverflowError(ArithmeticError):
    pass


@dataclass(frozen=True)
class DEConfig:
    noise_variance: float = 0.0
    quadrature_order: int = 61
    max_iterations: int = 500
    convergence_tolerance: float = 1e-10
    decoder_mode: str = "MAP"
    prior_order: int = 80

    def __post_init__(self):
        if self.noise_variance < 0:
            raise ValueError("noise variance must be non-negative")
        if self.quadrature_order < 8:
            raise ValueError("quadrature_order must be >= 8")
        if self.convergence_tolerance <= 0:
            raise ValueError("convergence tolerance must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        mode = self.decoder_mode.upper()
        if mode not in ("MAP", "MMSE"):
            raise ValueError("decoder_mode must be MAP or MMSE")
        object.__setattr__(self, "decoder_mode", mode)


@dataclass(frozen=True)
class _State:
    def __post_init__(self):
        for f in fields(self):
            x = getattr(self, f.name)
            if not np.isfinite(x) or x < 0:
                raise ValueError(f"{f.name} must be finite and non-negative, got {x!r}")
            object.__setattr__(self, f.name, float(x))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self))

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class DEStateRegular(_State):
    E: float
    V: float


@dataclass(frozen=True)
class DEStatePreferential(_State):
    E_H: float
    E_L: float
    V_H: float
    V_L: float


DEState = Union[DEStateRegular, DEStatePreferential]


@dataclass(frozen=True)
class EnsembleSummary:
    a1: float
    a2: float


def ensemble_summary(lam: GeneratingPolynomial, rho: GeneratingPolynomial) -> EnsembleSummary:
    """``a1 = sum rho_i lam_j sqrt(i/j)`` and ``a2 = sum rho_i lam_j i/j``."""
    a1 = sum(r * l * np.sqrt(i / j) for i, r in rho.support() for j, l in lam.support())
    a2 = sum(r * l * (i / j) for i, r in rho.support() for j, l in lam.support())
    return EnsembleSummary(float(a1), float(a2))


# ---- h-functions ---------------------------------------------------------

def h_general_map(mu, v, prior: PriorModel, grid_points: int = 4001):
    """Zero-temperature posterior map ``(mean, var)`` for a prior with a density.

    Laplacian and Gaussian priors are handled in closed form. Tabulated
    priors use a grid argmax of ``log p(x) - (x - mu)^2 / (2 v)`` with
    parabolic refinement, and the inverse second difference as variance.
    """
    if isinstance(prior, Laplacian):
        return h_laplacian(mu, v, prior.beta)
    if isinstance(prior, Gaussian):
        mu_a = np.asarray(mu, dtype=float)
        v_a = np.asarray(v, dtype=float)
        t = prior.variance
        mean = mu_a * t / (t + v_a)
        var = v_a * t / (t + v_a) + 0.0 * mu_a
        if mean.ndim == 0:
            return float(mean), float(var)
        return mean, var
    if isinstance(prior, Tabulated):
        return _tabulated_map(mu, v, prior)
    raise DegeneratePosteriorError(
        f"{type(prior).__name__} has atoms and no density; use its default_regularizer()")


def _tabulated_map(mu, v, prior: Tabulated):
    mu_a = np.asarray(mu, dtype=float)
    v_a = np.broadcast_to(np.asarray(v, dtype=float), mu_a.shape)
    g = prior.grid
    h = g[1] - g[0]
    logp = prior.log_density(g)
    out_m = np.empty(mu_a.shape)
    out_v = np.empty(mu_a.shape)
    flat_mu, flat_v = mu_a.ravel(), v_a.ravel()
    om, ov = out_m.ravel(), out_v.ravel()
    for start in range(0, flat_mu.size, 256):
        sl = slice(start, start + 256)
        m_blk, v_blk = flat_mu[sl, None], flat_v[sl, None]
        if np.any(v_blk <= 0):
            om[sl] = flat_mu[sl]
            ov[sl] = 0.0
            pos = flat_v[sl] > 0
            if not np.any(pos):
                continue
        with np.errstate(divide="ignore", invalid="ignore"):
            obj = logp - np.square(g - m_blk) / (2 * np.where(v_blk > 0, v_blk, 1.0))
        idx = np.argmax(obj, axis=1)
        if np.all(np.isneginf(obj[np.arange(idx.size), idx])):
            raise DegeneratePosteriorError("objective is -inf on the whole grid")
        # shift the three-point stencil inward at the grid ends
        c = np.clip(idx, 1, g.size - 2)
        rows = np.arange(idx.size)
        f0, f1, f2 = obj[rows, c - 1], obj[rows, c], obj[rows, c + 1]
        with np.errstate(invalid="ignore"):
            curv = -(f0 - 2 * f1 + f2) / h**2
        if np.any(~(curv > 0)):
            raise DegeneratePosteriorError("flat or convex objective at the maximizer")
        loc = g[idx].copy()
        interior = (idx == c) & np.isfinite(f0) & np.isfinite(f2)
        with np.errstate(invalid="ignore", divide="ignore"):
            shift = 0.5 * h * (f0 - f2) / (f0 - 2 * f1 + f2)
        loc[interior] += np.clip(shift[interior], -0.5 * h, 0.5 * h)
        keep = flat_v[sl] > 0
        om[sl] = np.where(keep, loc, flat_mu[sl])
        ov[sl] = np.where(keep, 1.0 / curv, 0.0)
    if out_m.ndim == 0:
        return float(out_m), float(out_v)
    return out_m, out_v


def h_mmse(mu, v, prior: PriorModel):
    """Posterior mean and variance of ``x`` given ``mu = x + sqrt(v) z``."""
    return prior.mmse(mu, v)


# ---- shared expectation machinery ---------------------------------------

@dataclass(frozen=True)
class _Denoiser:
    fn: Callable
    threshold_scale: Optional[float] = None  # kinks at +-scale*b2 when soft thresholding


def _make_denoiser(prior: PriorModel, regularizer: Optional[PriorModel], mode: str) -> _Denoiser:
    if mode == "MMSE":
        return _Denoiser(prior.mmse)
    reg = regularizer if regularizer is not None else prior.default_regularizer()
    if isinstance(reg, Laplacian):
        beta = reg.beta
        return _Denoiser(lambda mu, v: h_laplacian(mu, v, beta), beta)
    return _Denoiser(lambda mu, v: h_general_map(mu, v, reg))


def _expect(prior: PriorModel, b1: float, b2: float, den: _Denoiser,
            config: DEConfig) -> tuple[float, float]:
    """``E[(h_mean(s + b1 z; b2) - s)^2]`` and ``E[h_var(s + b1 z; b2)]``."""
    if not (np.isfinite(b1) and np.isfinite(b2)):
        raise NumericOverflowError("non-finite check-node sums")
    s, ws = prior.outer_rule(config.prior_order)
    s = np.asarray(s, dtype=float)
    ws = np.asarray(ws, dtype=float)
    if b2 == 0.0:
        # zero variance: every h-function reduces to the identity
        return float(b1 * b1), 0.0
    if b1 == 0.0:
        mean, var = den.fn(s, np.full_like(s, b2))
        return float(np.sum(ws * np.square(mean - s))), float(np.sum(ws * var))
    order = config.quadrature_order
    if den.threshold_scale is not None:
        thr = den.threshold_scale * b2
        kinks = np.stack([(-thr - s) / b1, (thr - s) / b1], axis=1)
        z, wz = segmented_normal_rule(kinks, order)
    else:
        zg, wg = gauss_hermite(order)
        z = np.broadcast_to(zg, (s.size, zg.size))
        wz = np.broadcast_to(wg, z.shape)
    mu = s[:, None] + b1 * z
    mean, var = den.fn(mu, np.full_like(mu, b2))
    e = float(np.sum(ws[:, None] * wz * np.square(mean - s[:, None])))
    v = float(np.sum(ws[:, None] * wz * var))
    if not (np.isfinite(e) and np.isfinite(v)):
        raise NumericOverflowError("quadrature produced a non-finite value")
    return e, v


# ---- step functions ------------------------------------------------------

def regular_b_terms(state: DEStateRegular, lam: GeneratingPolynomial, rho: GeneratingPolynomial,
                    A: float, noise_variance: float) -> tuple[float, float]:
    an = A * noise_variance
    b1 = sum(r * l * np.sqrt((i * state.E + an) / j) for i, r in rho.support() for j, l in lam.support())
    b2 = sum(r * l * (an + i * state.V) / j for i, r in rho.support() for j, l in lam.support())
    return float(b1), float(b2)


def de_step_regular(state: DEStateRegular, lam: GeneratingPolynomial, rho: GeneratingPolynomial,
                    A: float, prior: PriorModel, config: DEConfig = DEConfig(),
                    regularizer: Optional[PriorModel] = None) -> DEStateRegular:
    """One step for a general ensemble, prior and decoder.

    In MAP mode the h-functions come from ``regularizer`` (default: the
    prior's own l1 calibration when it has atoms, else the prior itself).
    In MMSE mode the prior's posterior mean/variance are used.
    """
    b1, b2 = regular_b_terms(state, lam, rho, A, config.noise_variance)
    den = _make_denoiser(prior, regularizer, config.decoder_mode)
    if b2 == 0.0:
        return DEStateRegular(b1 * b1 if b1 else 0.0, 0.0)
    return DEStateRegular(*_expect(prior, b1, b2, den, config))


def de_step_lasso(state: DEStateRegular, a1: float, a2: float, beta: float,
                  prior: PriorModel, method: str = "closed",
                  config: DEConfig = DEConfig()) -> DEStateRegular:
    """Noiseless l1 step with thresholding at ``beta * a2 * V``.

    ``method="closed"`` evaluates the z-expectation with normal cdf/pdf
    expressions per prior node; ``method="quadrature"`` uses the segmented
    rule and exists as a cross-check.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    a = a1 * np.sqrt(state.E)
    thr = beta * a2 * state.V
    if method == "quadrature":
        den = _Denoiser(lambda mu, v: h_laplacian(mu, v, beta), beta)
        if a2 * state.V == 0.0:
            return DEStateRegular(a * a, 0.0)
        return DEStateRegular(*_expect(prior, a, a2 * state.V, den, config))
    if method != "closed":
        raise ValueError("method must be 'closed' or 'quadrature'")
    s, ws = prior.outer_rule(config.prior_order)
    s = np.asarray(s, dtype=float)
    ws = np.asarray(ws, dtype=float)
    if a == 0.0:
        out, d = prox(s, thr)
        return DEStateRegular(float(np.sum(ws * np.square(np.asarray(out) - s))),
                              float(np.sum(ws * thr * np.asarray(d))))
    tp = (thr - s) / a
    tm = (-thr - s) / a
    php, phm = normal_pdf(tp), normal_pdf(tm)
    Qp, Pm = ndtr(-tp), ndtr(tm)
    upper = a * a * (tp * php + Qp) - 2 * a * thr * php + thr * thr * Qp
    lower = a * a * (Pm - tm * phm) - 2 * a * thr * phm + thr * thr * Pm
    middle = s * s * np.clip(ndtr(tp) - Pm, 0.0, 1.0)
    e = float(np.sum(ws * (upper + lower + middle)))
    v = float(np.sum(ws * thr * (Qp + Pm)))
    return DEStateRegular(e, v)


def de_step_gaussian(state: DEStateRegular, a1: float, a2: float) -> DEStateRegular:
    E, V = state.E, state.V
    d = 1.0 + a2 * V
    return DEStateRegular((a1 * a1 * E + a2 * a2 * V * V) / (d * d), a2 * V / d)


def preferential_b_terms(state: DEStatePreferential, spec: PreferentialEnsembleSpec,
                         noise_variance: float) -> dict[str, float]:
    """Check-node sums for both parts.

    ``b_H1 = sum lam_H,l rho_L,i rho_H,j sqrt((A s2 + i E_L + j E_H) / l)`` and
    ``b_H2`` likewise with ``V`` and no square root; swap H and L for the
    L-side terms.
    """
    an = spec.sensing_scale_A * noise_variance

    def terms(lam_own, rho_other, rho_own, E_other, E_own, V_other, V_own):
        b1 = b2 = 0.0
        for l, pl in lam_own.support():
            for i, pi in rho_other.support():
                for j, pj in rho_own.support():
                    w = pl * pi * pj
                    b1 += w * np.sqrt((an + i * E_other + j * E_own) / l)
                    b2 += w * (an + i * V_other + j * V_own) / l
        return float(b1), float(b2)

    bH1, bH2 = terms(spec.lambda_H, spec.rho_L, spec.rho_H, state.E_L, state.E_H, state.V_L, state.V_H)
    bL1, bL2 = terms(spec.lambda_L, spec.rho_H, spec.rho_L, state.E_H, state.E_L, state.V_H, state.V_L)
    return {"H1": bH1, "H2": bH2, "L1": bL1, "L2": bL2}


def de_step_preferential(state: DEStatePreferential, spec: PreferentialEnsembleSpec,
                         priors: tuple[PriorModel, PriorModel], config: DEConfig = DEConfig(),
                         regularizers: Optional[tuple[PriorModel, PriorModel]] = None,
                         ) -> DEStatePreferential:
    """One step for a two-part ensemble; the parts may use different regularizers."""
    b = preferential_b_terms(state, spec, config.noise_variance)
    regs = regularizers if regularizers is not None else (None, None)
    out = {}
    for part, prior, reg in (("H", priors[0], regs[0]), ("L", priors[1], regs[1])):
        b1, b2 = b[part + "1"], b[part + "2"]
        if b2 == 0.0:
            out[part] = (b1 * b1, 0.0)
            continue
        den = _make_denoiser(prior, reg, config.decoder_mode)
        out[part] = _expect(prior, b1, b2, den, config)
    return DEStatePreferential(out["H"][0], out["L"][0], out["H"][1], out["L"][1])


# ---- trajectories ----------------------------------------------------------

@dataclass
class DETrace:
    states: list = field(default_factory=list)
    converged: bool = False
    diverged: bool = False

    @property
    def fixed_point(self):
        return self.states[-1]

    @property
    def iterations(self) -> int:
        return len(self.states) - 1

    def array(self) -> np.ndarray:
        return np.array([s.as_array() for s in self.states])

    def reached_zero(self, tol: float = ZERO_TOL, keys: Optional[Sequence[str]] = None) -> bool:
        last = self.fixed_point
        names = keys if keys is not None else last.columns()
        return all(getattr(last, k) < tol for k in names)

    def first_below(self, tol: float, keys: Sequence[str]) -> Optional[int]:
        """First iteration where every listed field is below ``tol``."""
        for t, s in enumerate(self.states):
            if all(getattr(s, k) < tol for k in keys):
                return t
        return None

    def write_csv(self, path, comment: Optional[str] = None) -> None:
        cols = self.states[0].columns()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration"] + cols)
            for t, s in enumerate(self.states):
                w.writerow([t] + [repr(x) for x in s.as_array()])


def de_run(initial: DEState, step: Callable[[DEState], DEState],
           config: DEConfig = DEConfig()) -> DETrace:
    """Iterate ``step`` until the max-norm change drops below the tolerance.

    A state with any entry above 1e12 (or non-finite) stops the run with
    ``diverged=True``.
    """
    trace = DETrace([initial])
    cur = initial
    for _ in range(config.max_iterations):
        try:
            nxt = step(cur)
        except (ValueError, NumericOverflowError):
            trace.diverged = True
            return trace
        arr = nxt.as_array()
        trace.states.append(nxt)
        if np.any(arr > DIVERGENCE_LIMIT):
            trace.diverged = True
            return trace
        if np.max(np.abs(arr - cur.as_array())) < config.convergence_tolerance:
            trace.converged = True
            return trace
        cur = nxt
    return trace


def initial_state_regular(prior: PriorModel) -> DEStateRegular:
    m2 = prior.second_moment()
    return DEStateRegular(m2, m2)


def initial_state_preferential(prior_H: PriorModel, prior_L: PriorModel) -> DEStatePreferential:
    mh, ml = prior_H.second_moment(), prior_L.second_moment()
    return DEStatePreferential(mh, ml, mh, ml)
