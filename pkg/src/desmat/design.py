"""Degree-distribution design for regular and preferential sensing.

Regular designs minimize the measurement rate subject to the closed-form
necessary conditions ``a1^2 <= n/k`` and ``a2 <= n / (c0 k log(n/k))`` and
are then checked by running density evolution.

Preferential designs minimize the rate subject to three closed-form
constraints (variance, error and priority, see :func:`pref_constraints`).
An initialization LP is followed by alternating LP refinements; every
sub-problem is solved by :mod:`desmat.simplex`.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .density_evolution import (DEConfig, DEStateRegular, DETrace, de_run, de_step_lasso,
                                de_step_preferential, ensemble_summary,
                                initial_state_preferential, initial_state_regular)
from .ensembles import (GeneratingPolynomial, PreferentialEnsembleSpec, RegularEnsembleSpec,
                        beta_from_sparsity, inv_mean, inv_sqrt_mean, mean_degree,
                        ratio_identity_error, sqrt_mean)
from .priors import Laplacian, PriorModel, SpikeDiscrete
from .simplex import linprog

log = logging.getLogger(__name__)

DE_ZERO = 1e-6
IMPROVE_TOL = 1e-9


class InfeasibleDesignError(ValueError):
    def __init__(self, message: str, binding: str):
        super().__init__(message)
        self.binding = binding


@dataclass
class DesignResult:
    distributions: dict
    achieved_rate: float
    constraint_report: dict
    de_validation: Optional[DETrace] = None
    valid: bool = False
    m: Optional[int] = None
    n: Optional[int] = None
    history: list = field(default_factory=list)
    stalled: bool = False
    message: str = ""

    def write_report_csv(self, path, comment: Optional[str] = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["constraint", "value", "bound", "satisfied"])
            for name, (val, bound, ok) in self.constraint_report.items():
                w.writerow([name, repr(float(val)), repr(float(bound)), int(bool(ok))])


# ---- regular designs ---------------------------------------------------------

def closed_form_bounds(n: int, k: int, c0: float = 1.0) -> tuple[float, float]:
    """Upper bounds ``(a1^2, a2)`` necessary for noiseless l1 recovery."""
    if not 0 < k < n:
        raise ValueError("need 0 < k < n (log(n/k) must be positive)")
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    return n / k, n / (c0 * k * math.log(n / k))


@dataclass(frozen=True)
class RegularDesignProblem:
    n: int
    k: int
    c0: float = 1.0
    dv_max: int = 20
    dc_max: int = 60
    prior: Optional[PriorModel] = None

    def __post_init__(self):
        if not 0 < self.k < self.n:
            raise ValueError("need 0 < k < n")
        if self.dv_max < 2 or self.dc_max < 2:
            raise ValueError("degree caps must be >= 2")

    def signal_prior(self) -> PriorModel:
        if self.prior is not None:
            return self.prior
        return SpikeDiscrete(self.k / self.n, self.c0, symmetric=True)


def regular_report(lam: GeneratingPolynomial, rho: GeneratingPolynomial,
                   n: int, k: int, c0: float = 1.0) -> dict:
    b1, b2 = closed_form_bounds(n, k, c0)
    s = ensemble_summary(lam, rho)
    tol = 1e-12
    return {
        "a1_sq": (s.a1**2, b1, s.a1**2 <= b1 * (1 + tol)),
        "a2": (s.a2, b2, s.a2 <= b2 * (1 + tol)),
    }


def check_regular_pair(dv: int, dc: int, n: int, k: int, c0: float = 1.0) -> dict:
    """Constraint report for the single-degree pair ``(dv, dc)``."""
    return regular_report(GeneratingPolynomial.single(dv), GeneratingPolynomial.single(dc), n, k, c0)


def _regular_lp(dc: int, problem: RegularDesignProblem) -> Optional[GeneratingPolynomial]:
    """Smallest-mean variable distribution for a fixed check degree ``dc``."""
    b1, b2 = closed_form_bounds(problem.n, problem.k, problem.c0)
    deg = np.arange(2, problem.dv_max + 1, dtype=float)
    A_ub = [dc / deg, math.sqrt(dc) / np.sqrt(deg)]
    b_ub = [b2, math.sqrt(b1)]
    res = linprog(deg, A_ub, b_ub, [np.ones_like(deg)], [1.0])
    if not res.success:
        return None
    return GeneratingPolynomial.from_array(np.concatenate([[0.0, 0.0], res.x]), normalize=True)


def _de_validate_regular(lam, rho, problem: RegularDesignProblem, config: DEConfig) -> DETrace:
    s = ensemble_summary(lam, rho)
    prior = problem.signal_prior()
    beta = beta_from_sparsity(problem.n, problem.k, problem.c0)
    return de_run(initial_state_regular(prior),
                  lambda st: de_step_lasso(st, s.a1, s.a2, beta, prior, config=config), config)


def optimize_regular(problem: RegularDesignProblem, include_irregular: bool = False,
                     max_validations: int = 25, config: DEConfig = DEConfig()) -> DesignResult:
    """Minimum-rate pair meeting the closed-form bounds, then DE-checked.

    Candidates are single-degree pairs ``(dv, dc)`` and, with
    ``include_irregular``, the LP-optimal variable distribution for every
    fixed check degree. They are tried in order of increasing rate; the first
    whose noiseless DE run reaches zero is returned.
    """
    cands = []
    for dc in range(2, problem.dc_max + 1):
        rho = GeneratingPolynomial.single(dc)
        for dv in range(2, problem.dv_max + 1):
            lam = GeneratingPolynomial.single(dv)
            rep = regular_report(lam, rho, problem.n, problem.k, problem.c0)
            if all(ok for _, _, ok in rep.values()):
                cands.append((dv / dc, dv, dc, lam, rho, rep))
        if include_irregular:
            lam = _regular_lp(dc, problem)
            if lam is not None and lam.max_degree > 0:
                rep = regular_report(lam, rho, problem.n, problem.k, problem.c0)
                if all(ok for _, _, ok in rep.values()):
                    cands.append((mean_degree(lam) / dc, mean_degree(lam), dc, lam, rho, rep))
    if not cands:
        b1, b2 = closed_form_bounds(problem.n, problem.k, problem.c0)
        # the most favourable pair is (2, dc) with dc as small as possible
        best = check_regular_pair(problem.dv_max, 2, problem.n, problem.k, problem.c0)
        worst = max(best, key=lambda key: best[key][0] / best[key][1])
        raise InfeasibleDesignError("no distribution meets the bounds within the degree caps", worst)
    cands.sort(key=lambda c: (c[0], c[1], c[2]))
    first = None
    for rate, _, dc, lam, rho, rep in cands[:max_validations]:
        trace = _de_validate_regular(lam, rho, problem, config)
        ok = trace.reached_zero(DE_ZERO)
        res = DesignResult({"lambda": lam, "rho": rho}, rate, rep, trace, ok, n=problem.n,
                           m=int(math.ceil(problem.n * rate - 1e-9)))
        if first is None:
            first = res
        if ok:
            return res
    first.message = "no candidate passed density-evolution validation"
    return first


# ---- preferential designs -------------------------------------------------

@dataclass(frozen=True)
class PreferentialDesignProblem:
    n_H: int
    n_L: int
    k_H: int
    k_L: int
    dv_max: int = 50
    dc_H: int = 5
    dc_L: int = 5
    beta_H: Optional[float] = None
    beta_L: Optional[float] = None
    T: int = 10
    polygon_sides: int = 64

    def __post_init__(self):
        if self.n_H < 1 or self.n_L < 1:
            raise ValueError("both partitions must be non-empty")
        if not 0 < self.k_H < self.n_H or not 0 < self.k_L < self.n_L:
            raise ValueError("need 0 < k < n in each part")
        if self.k_H / self.n_H <= self.k_L / self.n_L:
            raise ValueError("the high-priority part must be denser (k_H/n_H > k_L/n_L)")
        if self.k_H / self.n_H < 2 * self.k_L / self.n_L:
            log.warning("k_H/n_H is less than twice k_L/n_L; the priority constraint is tight")
        if self.dv_max < 2 or self.dc_H < 1 or self.dc_L < 1:
            raise ValueError("invalid degree caps")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if self.beta_H is None:
            object.__setattr__(self, "beta_H", math.log(self.n_H / self.k_H))
        if self.beta_L is None:
            object.__setattr__(self, "beta_L", math.log(self.n_L / self.k_L))

    @property
    def rho_H(self) -> GeneratingPolynomial:
        return GeneratingPolynomial.single(self.dc_H)

    @property
    def rho_L(self) -> GeneratingPolynomial:
        return GeneratingPolynomial.single(self.dc_L)

    @property
    def sparsity_H(self) -> float:
        return self.k_H / self.n_H

    @property
    def sparsity_L(self) -> float:
        return self.k_L / self.n_L

    def priors(self) -> tuple[PriorModel, PriorModel]:
        return (SpikeDiscrete(self.sparsity_H, 1.0, symmetric=True),
                SpikeDiscrete(self.sparsity_L, 1.0, symmetric=True))

    def regularizers(self) -> tuple[Laplacian, Laplacian]:
        return Laplacian(self.beta_H), Laplacian(self.beta_L)


def pref_constraints(lambda_H, lambda_L, rho_H, rho_L, problem: PreferentialDesignProblem) -> dict:
    """Left-hand sides of the variance, error and priority constraints.

    * ``C_V = [(b_H s_H u_H)^2 + (b_L s_L u_L)^2] [R_H^2 + R_L^2] <= 1``
    * ``C_E = s_H w_H^2 [Q_H^2 + Q_L^2] <= 1``
    * ``C_P = s_H w_H^2 - s_L w_L^2 <= 0``

    with ``s = k/n``, ``u = sum lam_l / l``, ``w = sum lam_l / sqrt(l)``,
    ``R = sum i rho_i`` and ``Q = sum sqrt(i) rho_i``.
    """
    sH, sL = problem.sparsity_H, problem.sparsity_L
    uH, uL = inv_mean(lambda_H), inv_mean(lambda_L)
    wH, wL = inv_sqrt_mean(lambda_H), inv_sqrt_mean(lambda_L)
    RH, RL = mean_degree(rho_H), mean_degree(rho_L)
    QH, QL = sqrt_mean(rho_H), sqrt_mean(rho_L)
    cv = ((problem.beta_H * sH * uH) ** 2 + (problem.beta_L * sL * uL) ** 2) * (RH**2 + RL**2)
    ce = sH * wH**2 * (QH**2 + QL**2)
    cp = sH * wH**2 - sL * wL**2
    tol = 1e-9
    return {
        "C_V": (cv, 1.0, cv <= 1.0 + tol),
        "C_E": (ce, 1.0, ce <= 1.0 + tol),
        "C_P": (cp, 0.0, cp <= tol),
    }


def _degrees(problem: PreferentialDesignProblem) -> np.ndarray:
    return np.arange(2, problem.dv_max + 1, dtype=float)


def _to_poly(x: np.ndarray) -> GeneratingPolynomial:
    x = np.where(x < 1e-9, 0.0, x)  # drop simplex roundoff
    return GeneratingPolynomial.from_array(np.concatenate([[0.0, 0.0], x]), normalize=True,
                                           no_one_way=True)


def _to_vec(poly: GeneratingPolynomial, problem: PreferentialDesignProblem) -> np.ndarray:
    c = np.zeros(problem.dv_max + 1)
    arr = poly.array()
    c[:arr.size] = arr
    return c[2:]


class _PrefLP:
    """Shared linear pieces over ``x = [lam_H(2..D), lam_L(2..D)]``."""

    def __init__(self, problem: PreferentialDesignProblem, rho_H=None, rho_L=None):
        self.p = problem
        self.rho_H = rho_H or problem.rho_H
        self.rho_L = rho_L or problem.rho_L
        d = _degrees(problem)
        self.D = d.size
        z = np.zeros_like(d)
        self.inv = 1.0 / d
        self.isq = 1.0 / np.sqrt(d)
        self.deg = d
        self.zero = z
        self.RH, self.RL = mean_degree(self.rho_H), mean_degree(self.rho_L)
        self.QH, self.QL = sqrt_mean(self.rho_H), sqrt_mean(self.rho_L)
        self.kv_H = problem.beta_H * problem.sparsity_H  # scale of u_H in C_V
        self.kv_L = problem.beta_L * problem.sparsity_L

    def row(self, h, l):
        return np.concatenate([h, l])

    def equalities(self):
        p = self.p
        # edge coupling between parts: n_H R_L S_H = n_L R_H S_L
        coupling = self.row(p.n_H * self.RL * self.deg, -p.n_L * self.RH * self.deg)
        simplex_H = self.row(np.ones(self.D), self.zero)
        simplex_L = self.row(self.zero, np.ones(self.D))
        return [coupling, simplex_H, simplex_L], [0.0, 1.0, 1.0]

    def error_row(self):
        bound = 1.0 / math.sqrt(self.p.sparsity_H * (self.QH**2 + self.QL**2))
        return self.row(self.isq, self.zero), bound

    def priority_row(self):
        return self.row(math.sqrt(self.p.sparsity_H) * self.isq,
                        -math.sqrt(self.p.sparsity_L) * self.isq), 0.0

    def variance_polygon(self, sides: int):
        """Inscribed polygon of the quarter disc ``p^2 + q^2 <= R^2``."""
        radius = 1.0 / math.sqrt(self.RH**2 + self.RL**2)
        rows, rhs = [], []
        step = (math.pi / 2) / sides
        for s in range(sides):
            phi = (s + 0.5) * step
            rows.append(self.row(math.cos(phi) * self.kv_H * self.inv,
                                 math.sin(phi) * self.kv_L * self.inv))
            rhs.append(radius * math.cos(step / 2))
        return rows, rhs

    def objective(self):
        return self.row(self.deg, self.zero)

    def split(self, x):
        return _to_poly(x[:self.D]), _to_poly(x[self.D:])


def _diagnose_init(problem: PreferentialDesignProblem, lp: _PrefLP) -> str:
    """Name the constraint that fails by the widest margin at its best case."""
    dmax = problem.dv_max
    err_row, err_bound = lp.error_row()
    err_best = 1.0 / math.sqrt(dmax)
    radius = 1.0 / math.sqrt(lp.RH**2 + lp.RL**2)
    var_best = math.hypot(lp.kv_H / dmax, lp.kv_L / dmax)
    viol = {
        "C_E": err_best / err_bound - 1.0,
        "C_V": var_best / radius - 1.0,
    }
    name = max(viol, key=viol.get)
    return name if viol[name] > 0 else "joint"


def init_preferential(problem: PreferentialDesignProblem):
    """Initialization LP: minimize ``S_H`` under coupling, variance and error rows.

    Among minimizers, a second LP picks the one with the smallest priority
    left-hand side, which keeps the later refinements feasible.
    """
    lp = _PrefLP(problem)
    A_eq, b_eq = lp.equalities()
    vrows, vrhs = lp.variance_polygon(problem.polygon_sides)
    erow, ebound = lp.error_row()
    A_ub = vrows + [erow]
    b_ub = vrhs + [ebound]
    res = linprog(lp.objective(), A_ub, b_ub, A_eq, b_eq)
    if not res.success:
        binding = _diagnose_init(problem, lp)
        raise InfeasibleDesignError(f"initialization program is infeasible ({binding})", binding)
    s_opt = res.fun
    prow, _ = lp.priority_row()
    res2 = linprog(prow, A_ub + [lp.objective()], b_ub + [s_opt * (1 + 1e-12) + 1e-12], A_eq, b_eq)
    x = res2.x if res2.success else res.x
    return lp.split(x)


def _rate(problem: PreferentialDesignProblem, lam_H, rho_H) -> float:
    return problem.n_H * mean_degree(lam_H) / mean_degree(rho_H) / (problem.n_H + problem.n_L)


def alternating_step(current, which: str, problem: PreferentialDesignProblem,
                     rho_H=None, rho_L=None):
    """One refinement LP.

    Both distributions are variables. The variance constraint is quadratic,
    so the side named by ``which`` keeps its current variance share fixed as
    an upper bound and the free side takes whatever budget remains; the
    error and priority constraints are linear as they stand. The current pair
    is feasible for this LP whenever it satisfies all three constraints, so
    the rate cannot go up. Returns ``(lambda_H, lambda_L, stalled)``.
    """
    if which not in ("H", "L"):
        raise ValueError("which must be 'H' or 'L'")
    lp = _PrefLP(problem, rho_H, rho_L)
    lam_H, lam_L = current
    A_eq, b_eq = lp.equalities()
    radius_sq = 1.0 / (lp.RH**2 + lp.RL**2)
    erow, ebound = lp.error_row()
    prow, pbound = lp.priority_row()
    if which == "H":
        fixed_u = inv_mean(lam_L)
        fixed_share = (lp.kv_L * fixed_u) ** 2
        budget = math.sqrt(max(radius_sq - fixed_share, 0.0)) / lp.kv_H
        vrows = [lp.row(lp.inv, lp.zero), lp.row(lp.zero, lp.inv)]
        vrhs = [budget, fixed_u]
    else:
        fixed_u = inv_mean(lam_H)
        fixed_share = (lp.kv_H * fixed_u) ** 2
        budget = math.sqrt(max(radius_sq - fixed_share, 0.0)) / lp.kv_L
        vrows = [lp.row(lp.zero, lp.inv), lp.row(lp.inv, lp.zero)]
        vrhs = [budget, fixed_u]
    # tiny relative slack so the current point stays feasible after roundoff
    vrhs = [v * (1 + 1e-12) + 1e-15 for v in vrhs]
    A_ub = vrows + [erow, prow]
    b_ub = vrhs + [ebound, pbound + 1e-15]
    res = linprog(lp.objective(), A_ub, b_ub, A_eq, b_eq)
    if not res.success:
        return lam_H, lam_L, True
    new_H, new_L = lp.split(res.x)
    old = mean_degree(lam_H)
    if mean_degree(new_H) < old - IMPROVE_TOL:
        return new_H, new_L, False
    return lam_H, lam_L, False


def preferential_spec(lambda_H, lambda_L, problem: PreferentialDesignProblem,
                      rho_H=None, rho_L=None) -> PreferentialEnsembleSpec:
    return PreferentialEnsembleSpec.from_distributions(
        lambda_H, lambda_L, rho_H or problem.rho_H, rho_L or problem.rho_L, problem.n_H, problem.n_L)


def validate_preferential(spec: PreferentialEnsembleSpec, problem: PreferentialDesignProblem,
                          config: Optional[DEConfig] = None) -> DETrace:
    cfg = config or DEConfig(max_iterations=500, convergence_tolerance=1e-14)
    priors = problem.priors()
    regs = problem.regularizers()
    return de_run(initial_state_preferential(*priors),
                  lambda st: de_step_preferential(st, spec, priors, cfg, regs), cfg)


def design_preferential(problem: PreferentialDesignProblem, validate: bool = True,
                        config: Optional[DEConfig] = None) -> DesignResult:
    lam_H, lam_L = init_preferential(problem)
    rho_H, rho_L = problem.rho_H, problem.rho_L
    history = [_rate(problem, lam_H, rho_H)]
    stalled = False
    for t in range(problem.T):
        which = "H" if t % 2 == 0 else "L"
        lam_H, lam_L, st = alternating_step((lam_H, lam_L), which, problem)
        stalled |= st
        history.append(_rate(problem, lam_H, rho_H))
    report = pref_constraints(lam_H, lam_L, rho_H, rho_L, problem)
    eq_err = ratio_identity_error(lam_H, lam_L, rho_H, rho_L, problem.n_H, problem.n_L)
    report["edge_ratio"] = (eq_err, 1e-9, eq_err <= 1e-9)
    spec = preferential_spec(lam_H, lam_L, problem)
    res = DesignResult({"lambda_H": lam_H, "lambda_L": lam_L, "rho_H": rho_H, "rho_L": rho_L},
                       history[-1], report, None, False, m=spec.m, n=spec.n,
                       history=history, stalled=stalled)
    ok = all(v[2] for v in report.values())
    if validate:
        trace = validate_preferential(spec, problem, config)
        res.de_validation = trace
        hit = trace.first_below(DE_ZERO, ("E_H", "V_H", "V_L"))
        res.valid = ok and hit is not None
        if hit is None:
            res.message = "density evolution did not drive E_H, V_H, V_L below 1e-6"
    else:
        res.valid = ok
    return res
