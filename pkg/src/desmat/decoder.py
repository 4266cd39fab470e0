"""Gaussian-approximated message passing and an l1 shrinkage baseline.

Messages live on edges, in the (check, variable) order of the sensing
matrix triplets. A half-iteration is a handful of vectorized segment sums,
so one flooding iteration costs O(edges).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .density_evolution import h_general_map
from .graph import HIGH, SparseSensingMatrix
from .priors import Laplacian, PriorModel
from .shrinkage import h_laplacian, prox

VAR_FLOOR = 1e-30
DIVERGENCE_NORM = 1e12


class SupportMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class DecoderConfig:
    mode: str = "MAP"
    max_iterations: int = 50
    damping: float = 1.0
    tolerance: float = 1e-8
    noise_variance: float = 0.0

    def __post_init__(self):
        mode = self.mode.upper()
        if mode not in ("MAP", "MMSE"):
            raise ValueError("mode must be MAP or MMSE")
        object.__setattr__(self, "mode", mode)
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iterations < 0 or self.tolerance <= 0 or self.noise_variance < 0:
            raise ValueError("invalid decoder configuration")


@dataclass
class MessageState:
    """Per-edge Gaussian messages in both directions."""

    mu_vc: np.ndarray
    nu_vc: np.ndarray
    mu_cv: np.ndarray
    nu_cv: np.ndarray
    iteration: int = 0


@dataclass
class DecodeResult:
    estimate: np.ndarray
    posterior_variance: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    E: list = field(default_factory=list)
    V: list = field(default_factory=list)
    converged: bool = False
    diverged: bool = False

    def write_csv(self, path, comment: Optional[str] = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "residual", "E", "V"])
            for t in range(len(self.residuals)):
                e = repr(self.E[t]) if t < len(self.E) else ""
                v = repr(self.V[t]) if t < len(self.V) else ""
                w.writerow([t, repr(self.residuals[t]), e, v])


def make_h(prior: PriorModel, mode: str, regularizer: Optional[PriorModel] = None) -> Callable:
    """Variable-node map ``(mu, v) -> (mean, var)``, vectorized."""
    if mode.upper() == "MMSE":
        return prior.mmse
    reg = regularizer if regularizer is not None else prior.default_regularizer()
    if isinstance(reg, Laplacian):
        beta = reg.beta
        return lambda mu, v: h_laplacian(mu, v, beta)
    return lambda mu, v: h_general_map(mu, v, reg)


def _segment_sum(values: np.ndarray, index: np.ndarray, size: int) -> np.ndarray:
    return np.bincount(index, weights=values, minlength=size)


class MessagePassingDecoder:
    """Flooding-schedule decoder bound to one sensing matrix.

    ``h`` may be a single map or, for two-part signals, a pair ``(h_H, h_L)``
    applied according to ``partition``.
    """

    def __init__(self, matrix: SparseSensingMatrix, h, prior_moments: tuple,
                 partition: Optional[np.ndarray] = None):
        self.M = matrix
        self.rows = np.asarray(matrix.rows, dtype=np.int64)
        self.cols = np.asarray(matrix.cols, dtype=np.int64)
        self.vals = np.asarray(matrix.values, dtype=float)
        if np.any(self.vals == 0):
            raise SupportMismatchError("zero entry on a graph edge")
        self.vals2 = self.vals**2
        self.partition = partition
        if isinstance(h, tuple):
            if partition is None:
                raise ValueError("a pair of h-maps needs a partition")
            is_h = np.asarray(partition)[self.cols] == HIGH
            self._edge_groups = (np.flatnonzero(is_h), np.flatnonzero(~is_h))
            self._var_groups = (np.flatnonzero(np.asarray(partition) == HIGH),
                                np.flatnonzero(np.asarray(partition) != HIGH))
            self.h = h
        else:
            self._edge_groups = None
            self.h = h
        self.prior_moments = prior_moments  # (mean, variance) or pair of those

    # -- h application over possibly partitioned index sets --
    def _apply_h(self, mu, v, groups):
        if groups is None:
            return self.h(mu, v)
        mean = np.empty_like(mu)
        var = np.empty_like(mu)
        for idx, h in zip(groups, self.h):
            if idx.size:
                mean[idx], var[idx] = h(mu[idx], v[idx])
        return mean, var

    def _prior_fill(self, groups, size, which_cols=None):
        if groups is None:
            m, v = self.prior_moments
            return np.full(size, float(m)), np.full(size, float(v))
        mean = np.empty(size)
        var = np.empty(size)
        for idx, (m, v) in zip(groups, self.prior_moments):
            mean[idx] = m
            var[idx] = v
        return mean, var

    def initial_state(self) -> MessageState:
        mu, nu = self._prior_fill(self._edge_groups, self.vals.size)
        z = np.zeros_like(mu)
        return MessageState(mu, nu, z.copy(), z.copy())

    def check_to_var(self, st: MessageState, y: np.ndarray, noise_variance: float) -> None:
        a = self.vals
        s_mu = _segment_sum(a * st.mu_vc, self.rows, self.M.m)
        s_nu = _segment_sum(self.vals2 * st.nu_vc, self.rows, self.M.m)
        resid = y[self.rows] - (s_mu[self.rows] - a * st.mu_vc)
        st.mu_cv = resid / a
        other = np.maximum(s_nu[self.rows] - self.vals2 * st.nu_vc, 0.0)
        st.nu_cv = (noise_variance + other) / self.vals2

    def _aggregate(self, st: MessageState):
        prec = 1.0 / np.maximum(st.nu_cv, VAR_FLOOR)
        sp_ = _segment_sum(prec, self.cols, self.M.n)
        sm_ = _segment_sum(prec * st.mu_cv, self.cols, self.M.n)
        return prec, sp_, sm_

    def var_to_check(self, st: MessageState, damping: float = 1.0) -> None:
        prec, sp_, sm_ = self._aggregate(st)
        cav_p = sp_[self.cols] - prec
        # relative guard: cancellation leaves roundoff when one message dominates
        empty = cav_p <= 1e-12 * sp_[self.cols]
        safe_p = np.where(empty, 1.0, cav_p)
        cav_mu = (sm_[self.cols] - prec * st.mu_cv) / safe_p
        cav_v = 1.0 / safe_p
        mean, var = self._apply_h(cav_mu, cav_v, self._edge_groups)
        if np.any(empty):
            pm, pv = self._prior_fill(self._edge_groups, self.vals.size)
            mean = np.where(empty, pm, mean)
            var = np.where(empty, pv, var)
        if damping < 1.0:
            mean = damping * mean + (1.0 - damping) * st.mu_vc
            var = damping * var + (1.0 - damping) * st.nu_vc
        st.mu_vc, st.nu_vc = mean, var

    def read_out(self, st: MessageState):
        _, sp_, sm_ = self._aggregate(st)
        isolated = sp_ <= 0
        safe = np.where(isolated, 1.0, sp_)
        groups = None if self._edge_groups is None else self._var_groups
        mean, var = self._apply_h(sm_ / safe, 1.0 / safe, groups)
        if np.any(isolated):
            pm, pv = self._prior_fill(groups, self.M.n)
            mean = np.where(isolated, pm, mean)
            var = np.where(isolated, pv, var)
        return mean, var

    def decode(self, y: np.ndarray, config: DecoderConfig,
               truth: Optional[np.ndarray] = None) -> DecodeResult:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.M.m,):
            raise ValueError(f"y must have length {self.M.m}")
        A = self.M.to_csr()
        st = self.initial_state()
        x_hat, _ = self._prior_fill(None if self._edge_groups is None else self._var_groups, self.M.n)
        post_v = np.zeros(self.M.n)
        res = DecodeResult(x_hat, post_v, 0)
        res.residuals.append(float(np.linalg.norm(y - A @ x_hat)))
        if truth is not None:
            res.E.append(float(np.mean((st.mu_vc - truth[self.cols]) ** 2)))
        res.V.append(float(np.mean(st.nu_vc)))
        for t in range(1, config.max_iterations + 1):
            self.check_to_var(st, y, config.noise_variance)
            self.var_to_check(st, config.damping)
            st.iteration = t
            new_x, post_v = self.read_out(st)
            res.iterations = t
            res.residuals.append(float(np.linalg.norm(y - A @ new_x)))
            if truth is not None:
                res.E.append(float(np.mean((st.mu_vc - truth[self.cols]) ** 2)))
            res.V.append(float(np.mean(st.nu_vc)))
            if not np.all(np.isfinite(new_x)) or np.linalg.norm(new_x) > DIVERGENCE_NORM:
                res.diverged = True
                res.estimate, res.posterior_variance = new_x, post_v
                return res
            change = np.max(np.abs(new_x - x_hat)) if new_x.size else 0.0
            x_hat = new_x
            if change < config.tolerance:
                res.converged = True
                break
        res.estimate, res.posterior_variance = x_hat, post_v
        return res


def decode(y, matrix: SparseSensingMatrix, prior: PriorModel, config: DecoderConfig = DecoderConfig(),
           regularizer: Optional[PriorModel] = None, truth=None) -> DecodeResult:
    """Single-prior convenience wrapper around :class:`MessagePassingDecoder`."""
    h = make_h(prior, config.mode, regularizer)
    dec = MessagePassingDecoder(matrix, h, (prior.first_moment(), prior.centered_variance()))
    return dec.decode(y, config, truth)


def decode_two_part(y, matrix: SparseSensingMatrix, partition, priors, config: DecoderConfig,
                    regularizers=(None, None), truth=None) -> DecodeResult:
    hs = tuple(make_h(p, config.mode, r) for p, r in zip(priors, regularizers))
    moments = tuple((p.first_moment(), p.centered_variance()) for p in priors)
    dec = MessagePassingDecoder(matrix, hs, moments, partition)
    return dec.decode(y, config, truth)


# ---- baseline ---------------------------------------------------------------

def spectral_norm_sq(A: sp.spmatrix, iterations: int = 100, seed: int = 0) -> float:
    """Power-iteration estimate of ``||A||_2^2``, inflated slightly to stay an upper bound."""
    n = A.shape[1]
    if A.nnz == 0:
        return 0.0
    v = np.random.Generator(np.random.Philox(seed)).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iterations):
        w = A.T @ (A @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0:
            return 0.0
        v = w / lam
    return lam * 1.01


def l1_objective(x, y, A, beta: float, noise_variance: float) -> float:
    r = y - A @ x
    s2 = noise_variance if noise_variance > 0 else 1.0
    return float(0.5 * r @ r / s2 + beta * np.abs(x).sum())


@dataclass(frozen=True)
class IstaConfig:
    max_iterations: int = 500
    tolerance: float = 1e-10
    noise_variance: float = 0.0


def ista_baseline(y, matrix, beta: float, config: IstaConfig = IstaConfig()) -> DecodeResult:
    """Iterative soft thresholding on ``(1/2s2)||y - Ax||^2 + beta ||x||_1``.

    With ``s2 = 0`` the threshold vanishes and the iteration is plain
    gradient descent on the residual.
    """
    A = matrix.to_csr() if isinstance(matrix, SparseSensingMatrix) else sp.csr_matrix(matrix)
    y = np.asarray(y, dtype=float)
    L = spectral_norm_sq(A)
    x = np.zeros(A.shape[1])
    res = DecodeResult(x, np.zeros_like(x), 0)
    res.residuals.append(float(np.linalg.norm(y)))
    if L == 0:
        res.converged = True
        return res
    thr = beta * config.noise_variance / L
    for t in range(1, config.max_iterations + 1):
        grad_step = x + (A.T @ (y - A @ x)) / L
        new, _ = prox(grad_step, thr)
        new = np.asarray(new, dtype=float)
        res.iterations = t
        res.residuals.append(float(np.linalg.norm(y - A @ new)))
        change = np.max(np.abs(new - x))
        x = new
        if change < config.tolerance:
            res.converged = True
            break
    res.estimate = x
    return res


def error_ratios(estimate, truth, partition=None) -> tuple[float, float]:
    """Relative l2 errors on the high-priority part and on the whole vector."""
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError("estimate and truth lengths differ")
    if partition is None:
        part = np.full(tru.shape, HIGH)
    else:
        part = np.asarray(partition)
    mask = part == HIGH
    nh, nw = np.linalg.norm(tru[mask]), np.linalg.norm(tru)
    if nh == 0 or nw == 0:
        raise ZeroDivisionError("truth has zero norm; ratio undefined")
    return float(np.linalg.norm(est[mask] - tru[mask]) / nh), float(np.linalg.norm(est - tru) / nw)
