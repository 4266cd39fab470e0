"""Degree distributions, ensemble specifications and counting identities.

Distributions are node-perspective: ``coeffs[i]`` is the fraction of nodes
with degree ``i``. A polynomial ``p(alpha) = sum_i coeffs[i] alpha**(i-1)``
is the usual way to write them down, so ``alpha**2`` means "all degree 3".
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

SIMPLEX_TOL = 1e-12


class DegenerateDistributionError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratingPolynomial:
    """Node-perspective degree distribution.

    ``coeffs`` is indexed by degree; ``coeffs[0]`` is always 0.
    """

    coeffs: tuple[float, ...]
    no_one_way: bool = field(default=False, compare=False)  # a constraint, not part of the value

    def __post_init__(self):
        c = tuple(float(x) for x in self.coeffs)
        while len(c) > 1 and c[-1] == 0.0:
            c = c[:-1]
        if len(c) < 2:
            raise DegenerateDistributionError("distribution has no positive degree")
        if c[0] != 0.0:
            raise ValueError("degree-0 coefficient must be 0")
        if any(x < 0 or not np.isfinite(x) for x in c):
            raise ValueError("coefficients must be finite and non-negative")
        if abs(sum(c) - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"coefficients sum to {sum(c)!r}, not 1")
        if self.no_one_way and c[1] != 0.0:
            raise ValueError("degree-1 nodes are excluded but coeffs[1] != 0")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_pairs(cls, pairs: Mapping[int, float], normalize: bool = False,
                   no_one_way: bool = False) -> "GeneratingPolynomial":
        if not pairs:
            raise DegenerateDistributionError("empty distribution")
        top = max(pairs)
        if min(pairs) < 1:
            raise ValueError("degrees must be >= 1")
        c = np.zeros(top + 1)
        for d, f in pairs.items():
            c[d] += f
        return cls.from_array(c, normalize=normalize, no_one_way=no_one_way)

    @classmethod
    def from_array(cls, coeffs, normalize: bool = False,
                   no_one_way: bool = False) -> "GeneratingPolynomial":
        c = np.asarray(coeffs, dtype=float).copy()
        c[np.abs(c) < 1e-15] = 0.0
        if normalize:
            total = c.sum()
            if total <= 0:
                raise DegenerateDistributionError("coefficients sum to zero")
            c = c / total
            # push the rounding residue onto the largest entry
            c[np.argmax(c)] += 1.0 - c.sum()
        return cls(tuple(c), no_one_way=no_one_way)

    @classmethod
    def single(cls, degree: int) -> "GeneratingPolynomial":
        if degree < 1:
            raise ValueError("degree must be >= 1")
        c = [0.0] * (degree + 1)
        c[degree] = 1.0
        return cls(tuple(c), no_one_way=degree > 1)

    @property
    def max_degree(self) -> int:
        return len(self.coeffs) - 1

    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs)

    def degrees(self) -> np.ndarray:
        return np.arange(len(self.coeffs))

    def support(self) -> list[tuple[int, float]]:
        return [(i, f) for i, f in enumerate(self.coeffs) if f > 0]

    def moment(self, fn) -> float:
        """``sum_i coeffs[i] * fn(i)`` over the support."""
        return float(sum(f * fn(i) for i, f in self.support()))

    def __str__(self) -> str:
        return format_pairs(self)


def mean_degree(poly: GeneratingPolynomial) -> float:
    return poly.moment(float)


def inv_mean(poly: GeneratingPolynomial) -> float:
    """``sum_l p_l / l``."""
    return poly.moment(lambda i: 1.0 / i)


def inv_sqrt_mean(poly: GeneratingPolynomial) -> float:
    """``sum_l p_l / sqrt(l)``."""
    return poly.moment(lambda i: 1.0 / np.sqrt(i))


def sqrt_mean(poly: GeneratingPolynomial) -> float:
    """``sum_i p_i sqrt(i)``."""
    return poly.moment(np.sqrt)


def rate_ratio(lam: GeneratingPolynomial, rho: GeneratingPolynomial) -> float:
    """Measurement rate ``m/n`` implied by the edge-count identity."""
    d = mean_degree(rho)
    if d <= 0:
        raise DegenerateDistributionError("check-side mean degree is zero")
    return mean_degree(lam) / d


def beta_from_sparsity(n: int, k: int, c0: float = 1.0) -> float:
    """l1 weight such that a Laplacian puts mass ``1 - k/n`` inside ``[-c0, c0]``."""
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    if k <= 0:
        raise ValueError("k = 0 gives an infinite beta")
    if k >= n:
        raise ValueError("k >= n gives a non-positive beta")
    return float(np.log(n / k) / c0)


@dataclass(frozen=True)
class RegularEnsembleSpec:
    lam: GeneratingPolynomial
    rho: GeneratingPolynomial
    n: int
    m: int
    sensing_scale_A: Optional[float] = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if self.sensing_scale_A is None:
            object.__setattr__(self, "sensing_scale_A", mean_degree(self.rho))
        if self.sensing_scale_A <= 0:
            raise ValueError("sensing scale must be positive")

    @classmethod
    def from_n(cls, lam, rho, n: int, sensing_scale_A=None) -> "RegularEnsembleSpec":
        """Pick ``m`` from the edge identity, rounded to the nearest integer."""
        m = max(1, int(round(n * mean_degree(lam) / mean_degree(rho))))
        return cls(lam, rho, n, m, sensing_scale_A)


@dataclass(frozen=True)
class PreferentialEnsembleSpec:
    lambda_H: GeneratingPolynomial
    lambda_L: GeneratingPolynomial
    rho_H: GeneratingPolynomial
    rho_L: GeneratingPolynomial
    n_H: int
    n_L: int
    m: int
    sensing_scale_A: Optional[float] = None

    def __post_init__(self):
        if self.n_H < 1 or self.n_L < 1:
            raise ValueError("both partitions must be non-empty")
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.sensing_scale_A is None:
            object.__setattr__(self, "sensing_scale_A",
                               mean_degree(self.rho_H) + mean_degree(self.rho_L))
        if self.sensing_scale_A <= 0:
            raise ValueError("sensing scale must be positive")

    @property
    def n(self) -> int:
        return self.n_H + self.n_L

    @classmethod
    def from_distributions(cls, lambda_H, lambda_L, rho_H, rho_L, n_H, n_L,
                           sensing_scale_A=None) -> "PreferentialEnsembleSpec":
        """Pick ``m`` from the H-side edge identity, rounded up."""
        m = int(np.ceil(n_H * mean_degree(lambda_H) / mean_degree(rho_H) - 1e-9))
        return cls(lambda_H, lambda_L, rho_H, rho_L, n_H, n_L, max(m, 1), sensing_scale_A)


EnsembleSpec = Union[RegularEnsembleSpec, PreferentialEnsembleSpec]


@dataclass(frozen=True)
class ConsistencyReport:
    satisfied: bool
    imbalance: float
    parts: dict = field(default_factory=dict)
    ratio_error: Optional[float] = None


def edge_consistency_check(spec: EnsembleSpec, slack: float = 1.0) -> ConsistencyReport:
    """Compare edge counts from the variable and check sides.

    Satisfied iff every partition differs by at most ``slack`` edges. For
    preferential specs the ratio identity between the two partitions is also
    evaluated (``ratio_error``), but it does not affect ``satisfied`` since
    it follows from the per-part identities up to rounding.
    """
    eps = 1e-9
    if isinstance(spec, RegularEnsembleSpec):
        ev = spec.n * mean_degree(spec.lam)
        ec = spec.m * mean_degree(spec.rho)
        imb = abs(ev - ec)
        return ConsistencyReport(imb <= slack + eps, imb, {"all": (ev, ec)})
    evH = spec.n_H * mean_degree(spec.lambda_H)
    ecH = spec.m * mean_degree(spec.rho_H)
    evL = spec.n_L * mean_degree(spec.lambda_L)
    ecL = spec.m * mean_degree(spec.rho_L)
    imb = max(abs(evH - ecH), abs(evL - ecL))
    return ConsistencyReport(imb <= slack + eps, imb, {"H": (evH, ecH), "L": (evL, ecL)},
                             ratio_identity_error(spec.lambda_H, spec.lambda_L, spec.rho_H,
                                                  spec.rho_L, spec.n_H, spec.n_L))


def ratio_identity_error(lambda_H, lambda_L, rho_H, rho_L, n_H, n_L) -> float:
    """Relative error of ``(S_L/S_H)(R_H/R_L) = n_H/n_L`` with ``S, R`` mean degrees."""
    lhs = (mean_degree(lambda_L) / mean_degree(lambda_H)) * (mean_degree(rho_H) / mean_degree(rho_L))
    target = n_H / n_L
    return abs(lhs - target) / target


# ---- text serialization -------------------------------------------------

def format_pairs(poly: GeneratingPolynomial) -> str:
    return ", ".join(f"{i}:{f!r}" for i, f in poly.support())


def parse_pairs(text: str, normalize: bool = False) -> GeneratingPolynomial:
    pairs: dict[int, float] = {}
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        d, sep, f = item.partition(":")
        if not sep:
            raise ValueError(f"bad degree:fraction pair {item!r}")
        pairs[int(d)] = pairs.get(int(d), 0.0) + float(f)
    return GeneratingPolynomial.from_pairs(pairs, normalize=normalize)


def spec_to_config(spec: EnsembleSpec, section: str = "ensemble") -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if isinstance(spec, RegularEnsembleSpec):
        cp[section] = {
            "kind": "regular",
            "n": str(spec.n),
            "m": str(spec.m),
            "sensing_scale_A": repr(spec.sensing_scale_A),
            "lambda": format_pairs(spec.lam),
            "rho": format_pairs(spec.rho),
        }
    else:
        cp[section] = {
            "kind": "preferential",
            "n_H": str(spec.n_H),
            "n_L": str(spec.n_L),
            "m": str(spec.m),
            "sensing_scale_A": repr(spec.sensing_scale_A),
            "lambda_H": format_pairs(spec.lambda_H),
            "lambda_L": format_pairs(spec.lambda_L),
            "rho_H": format_pairs(spec.rho_H),
            "rho_L": format_pairs(spec.rho_L),
        }
    return cp


def spec_from_section(sec: Mapping[str, str]) -> EnsembleSpec:
    kind = sec.get("kind", "regular").strip().lower()
    A = float(sec["sensing_scale_A"]) if "sensing_scale_A" in sec else None
    if kind == "regular":
        lam, rho = parse_pairs(sec["lambda"]), parse_pairs(sec["rho"])
        n = int(sec["n"])
        if "m" in sec:
            return RegularEnsembleSpec(lam, rho, n, int(sec["m"]), A)
        return RegularEnsembleSpec.from_n(lam, rho, n, A)
    if kind == "preferential":
        args = [parse_pairs(sec[key]) for key in ("lambda_H", "lambda_L", "rho_H", "rho_L")]
        n_H, n_L = int(sec["n_H"]), int(sec["n_L"])
        if "m" in sec:
            return PreferentialEnsembleSpec(*args, n_H, n_L, int(sec["m"]), A)
        return PreferentialEnsembleSpec.from_distributions(*args, n_H, n_L, A)
    raise ValueError(f"unknown ensemble kind {kind!r}")


def write_spec(spec: EnsembleSpec, path) -> None:
    cp = spec_to_config(spec)
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)


def read_spec(path, section: str = "ensemble") -> EnsembleSpec:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep n_H / n_L case
    if not cp.read(path, encoding="utf-8"):
        raise FileNotFoundError(path)
    return spec_from_section(cp[section])
