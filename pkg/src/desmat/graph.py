"""Bipartite factor graphs and signed sparse sensing matrices.

Graphs come from the configuration model: variable stubs are shuffled and
paired with check stubs, and repeated (variable, check) pairs are removed by
random edge switches, which keeps both degree sequences intact.

All randomness flows through :func:`make_rng`, a Philox counter-based
generator keyed by ``(seed, stream)``. Graph wiring uses stream 0, signs
use stream 1, and per-part wiring in preferential graphs uses streams 10/11.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .ensembles import (EnsembleSpec, GeneratingPolynomial, PreferentialEnsembleSpec,
                        RegularEnsembleSpec, mean_degree, ratio_identity_error)

NONE, HIGH, LOW = 0, 1, 2
_LABELS = {NONE: "NONE", HIGH: "H", LOW: "L"}


class GraphConstructionError(RuntimeError):
    pass


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator for ``(seed, stream)``; independent streams per purpose."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def largest_remainder_counts(poly: GeneratingPolynomial, count: int) -> np.ndarray:
    """Node counts per degree (indexed by degree) summing to ``count``.

    Remainders are handed out in order of decreasing fractional part, ties
    going to the lower degree.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    quota = poly.array() * count
    base = np.floor(quota + 1e-9).astype(np.int64)
    short = count - int(base.sum())
    if short > 0:
        frac = np.where(poly.array() > 0, quota - base, -1.0)
        order = np.lexsort((np.arange(frac.size), -frac))
        base[order[:short]] += 1
    return base


def sample_degree_sequence(poly: GeneratingPolynomial, count: int, seed: int = 0,
                           stream: int = 2) -> np.ndarray:
    counts = largest_remainder_counts(poly, count)
    seq = np.repeat(np.arange(counts.size), counts)
    return make_rng(seed, stream).permutation(seq)


@dataclass(frozen=True, eq=False)
class FactorGraph:
    """Edges sorted by (check, variable); ``partition`` labels each variable."""

    n: int
    m: int
    edge_var: np.ndarray
    edge_chk: np.ndarray
    partition: np.ndarray

    def __post_init__(self):
        order = np.lexsort((self.edge_var, self.edge_chk))
        object.__setattr__(self, "edge_var", np.ascontiguousarray(self.edge_var[order], dtype=np.int64))
        object.__setattr__(self, "edge_chk", np.ascontiguousarray(self.edge_chk[order], dtype=np.int64))
        for arr in (self.edge_var, self.edge_chk, self.partition):
            arr.setflags(write=False)

    @property
    def edge_count(self) -> int:
        return int(self.edge_var.size)

    @property
    def var_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_var, minlength=self.n)

    @property
    def check_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_chk, minlength=self.m)

    def adjacency(self) -> list[list[int]]:
        bounds = np.searchsorted(self.edge_chk, np.arange(self.m + 1))
        return [self.edge_var[bounds[a]:bounds[a + 1]].tolist() for a in range(self.m)]

    def is_simple(self) -> bool:
        key = self.edge_chk * self.n + self.edge_var
        return np.unique(key).size == key.size

    def write_adjacency(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# n={self.n} m={self.m}\n")
            fh.write("partition " + " ".join(_LABELS[int(p)] for p in self.partition) + "\n")
            for a, nbrs in enumerate(self.adjacency()):
                fh.write(f"{a}: " + " ".join(map(str, nbrs)) + "\n")


def _patch_to_total(deg: np.ndarray, target: int, max_gap: int) -> np.ndarray:
    """Raise the lowest degrees one by one until ``deg.sum() == target``."""
    gap = target - int(deg.sum())
    if gap < 0:
        raise ValueError("patch can only add stubs")
    if gap > max_gap:
        raise GraphConstructionError(f"stub totals differ by {gap}, more than {max_gap}")
    deg = deg.copy()
    for _ in range(gap):
        i = int(np.argmin(deg))  # first index among the lowest degrees
        deg[i] += 1
    return deg


def _balance(dv: np.ndarray, dc: np.ndarray, max_gap: int) -> tuple[np.ndarray, np.ndarray]:
    sv, sc = int(dv.sum()), int(dc.sum())
    if sv < sc:
        dv = _patch_to_total(dv, sc, max_gap)
    elif sc < sv:
        dc = _patch_to_total(dc, sv, max_gap)
    return dv, dc


def _configuration_model(dv: np.ndarray, dc: np.ndarray, rng: np.random.Generator,
                         switch_factor: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Random simple bipartite graph with the given degree sequences."""
    var = np.repeat(np.arange(dv.size), dv)
    chk = np.repeat(np.arange(dc.size), dc)
    var = rng.permutation(var)
    n_edges = var.size
    if n_edges == 0:
        return var, chk
    n_chk = max(dc.size, 1)
    key = var * n_chk + chk
    counts: dict[int, int] = {}
    for k in key.tolist():
        counts[k] = counts.get(k, 0) + 1
    bad = [e for e, k in enumerate(key.tolist()) if counts[k] > 1]
    attempts = 0
    cap = switch_factor * n_edges
    while bad:
        e = bad.pop()
        k = int(var[e] * n_chk + chk[e])
        if counts.get(k, 0) <= 1:
            continue
        while True:
            if attempts >= cap:
                raise GraphConstructionError(
                    f"could not remove repeated edges after {attempts} switch attempts")
            attempts += 1
            f = int(rng.integers(n_edges))
            v1, c1, v2, c2 = int(var[e]), int(chk[e]), int(var[f]), int(chk[f])
            if v1 == v2 or c1 == c2:
                continue
            k1, k2 = v1 * n_chk + c2, v2 * n_chk + c1
            if counts.get(k1, 0) or counts.get(k2, 0):
                continue
            old_f = v2 * n_chk + c2
            counts[k] -= 1
            counts[old_f] -= 1
            counts[k1] = 1
            counts[k2] = 1
            var[e], var[f] = v2, v1
            break
        if counts[k] > 1:
            bad.append(e)
    return var, chk


def build_graph(spec: EnsembleSpec, seed: int = 0) -> FactorGraph:
    """Sample a simple factor graph from the ensemble, deterministic in ``seed``."""
    if isinstance(spec, RegularEnsembleSpec):
        dv = sample_degree_sequence(spec.lam, spec.n, seed, stream=2)
        dc = sample_degree_sequence(spec.rho, spec.m, seed, stream=3)
        dv, dc = _balance(dv, dc, spec.lam.max_degree + spec.rho.max_degree)
        var, chk = _configuration_model(dv, dc, make_rng(seed, 0))
        return FactorGraph(spec.n, spec.m, var, chk, np.zeros(spec.n, dtype=np.int8))
    if isinstance(spec, PreferentialEnsembleSpec):
        parts = []
        offset = 0
        for tag, lam, rho, size, stream in ((HIGH, spec.lambda_H, spec.rho_H, spec.n_H, 10),
                                            (LOW, spec.lambda_L, spec.rho_L, spec.n_L, 11)):
            dv = sample_degree_sequence(lam, size, seed, stream=stream + 10)
            dc = sample_degree_sequence(rho, spec.m, seed, stream=stream + 20)
            dv, dc = _balance(dv, dc, lam.max_degree + rho.max_degree)
            var, chk = _configuration_model(dv, dc, make_rng(seed, stream))
            parts.append((var + offset, chk))
            offset += size
        var = np.concatenate([p[0] for p in parts])
        chk = np.concatenate([p[1] for p in parts])
        labels = np.concatenate([np.full(spec.n_H, HIGH, dtype=np.int8),
                                 np.full(spec.n_L, LOW, dtype=np.int8)])
        return FactorGraph(spec.n, spec.m, var, chk, labels)
    raise TypeError(f"unsupported spec type {type(spec).__name__}")


@dataclass(frozen=True, eq=False)
class SparseSensingMatrix:
    """Signed sparse matrix with entries ``sign / sqrt(A)`` on the graph support."""

    m: int
    n: int
    rows: np.ndarray
    cols: np.ndarray
    signs: np.ndarray
    sensing_scale_A: float
    seed: int

    @property
    def magnitude(self) -> float:
        return 1.0 / np.sqrt(self.sensing_scale_A)

    @property
    def values(self) -> np.ndarray:
        return self.signs * self.magnitude

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.rows, self.cols)), shape=(self.m, self.n))

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def write_triplets(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{self.m} {self.n} {self.sensing_scale_A!r} {self.seed}\n")
            for r, c, s in zip(self.rows.tolist(), self.cols.tolist(), self.signs.tolist()):
                fh.write(f"{r} {c} {int(s)}\n")


def read_triplets(path) -> SparseSensingMatrix:
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) != 4:
            raise ValueError(f"{path}: header must be 'm n A seed'")
        m, n, A, seed = int(head[0]), int(head[1]), float(head[2]), int(head[3])
        body = np.loadtxt(fh, dtype=np.int64, ndmin=2)
    if body.size == 0:
        body = np.zeros((0, 3), dtype=np.int64)
    return SparseSensingMatrix(m, n, body[:, 0], body[:, 1], body[:, 2].astype(float), A, seed)


def graph_to_matrix(graph: FactorGraph, A: float, seed: int = 0) -> SparseSensingMatrix:
    if A <= 0:
        raise ValueError("sensing scale must be positive")
    signs = np.where(make_rng(seed, 1).random(graph.edge_count) < 0.5, 1.0, -1.0)
    return SparseSensingMatrix(graph.m, graph.n, graph.edge_chk.copy(), graph.edge_var.copy(),
                               signs, float(A), int(seed))


def sample_matrix(spec: EnsembleSpec, seed: int = 0) -> tuple[FactorGraph, SparseSensingMatrix]:
    g = build_graph(spec, seed)
    return g, graph_to_matrix(g, spec.sensing_scale_A, seed)


def _histogram_matches(deg: np.ndarray, poly: GeneratingPolynomial, slack: int) -> bool:
    want = largest_remainder_counts(poly, deg.size)
    got = np.bincount(deg, minlength=want.size)
    if got.size > want.size:
        want = np.pad(want, (0, got.size - want.size))
    # patched nodes move by one degree each
    return int(np.abs(got - want).sum()) <= 2 * slack


def check_realization(graph: FactorGraph, spec: Optional[EnsembleSpec] = None) -> dict:
    """Report-only diagnostics for a sampled graph."""
    report: dict = {
        "simple": graph.is_simple(),
        "edges_var_side": int(graph.var_degrees.sum()),
        "edges_check_side": int(graph.check_degrees.sum()),
    }
    report["edge_duality"] = report["edges_var_side"] == report["edges_check_side"] == graph.edge_count
    if isinstance(spec, RegularEnsembleSpec):
        slack = abs(int(graph.edge_count) - int(round(min(spec.n * mean_degree(spec.lam),
                                                          spec.m * mean_degree(spec.rho)))))
        report["var_histogram"] = _histogram_matches(graph.var_degrees, spec.lam, slack)
        report["check_histogram"] = _histogram_matches(graph.check_degrees, spec.rho, slack)
    elif isinstance(spec, PreferentialEnsembleSpec):
        is_h = graph.partition[graph.edge_var] == HIGH
        dH = np.bincount(graph.edge_chk[is_h], minlength=graph.m)
        dL = np.bincount(graph.edge_chk[~is_h], minlength=graph.m)
        report["check_H_degrees"] = dH
        report["check_L_degrees"] = dL
        report["partition_wiring"] = bool(
            _histogram_matches(dH, spec.rho_H, 0) and _histogram_matches(dL, spec.rho_L, 0))
        vd = graph.var_degrees
        eH = int(vd[graph.partition == HIGH].sum())
        eL = int(vd[graph.partition == LOW].sum())
        report["edges_H"] = (eH, int(dH.sum()))
        report["edges_L"] = (eL, int(dL.sum()))
        report["ratio_identity_error"] = ratio_identity_error(
            spec.lambda_H, spec.lambda_L, spec.rho_H, spec.rho_L, spec.n_H, spec.n_L)
    checks = [v for k, v in report.items() if isinstance(v, (bool, np.bool_))]
    report["ok"] = bool(all(checks))
    return report
