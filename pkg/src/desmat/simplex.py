"""Dense two-phase simplex with Bland's rule.

Small, deterministic LP solver for the degree-distribution programs (a few
hundred variables at most). Solves

    minimize c @ x  subject to  A_ub @ x <= b_ub,  A_eq @ x == b_eq,
                                0 <= x <= upper.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

TOL = 1e-9


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible", "unbounded", "iteration_limit"
    x: Optional[np.ndarray]
    fun: Optional[float]
    iterations: int
    infeasibility: float = 0.0

    @property
    def success(self) -> bool:
        return self.status == "optimal"


def _pivot(T: np.ndarray, basis: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    nz = np.flatnonzero(np.abs(col) > 0)
    if nz.size:
        T[nz] -= np.outer(col[nz], T[r])
    basis[r] = c


def _run(T: np.ndarray, basis: np.ndarray, n_cols: int, max_iter: int) -> tuple[str, int]:
    """Minimize the objective in the last row of ``T`` over columns ``< n_cols``."""
    it = 0
    while it < max_iter:
        cost = T[-1, :n_cols]
        cand = np.flatnonzero(cost < -TOL)
        if cand.size == 0:
            return "optimal", it
        c = int(cand[0])  # Bland: lowest index
        col = T[:-1, c]
        pos = np.flatnonzero(col > TOL)
        if pos.size == 0:
            return "unbounded", it
        ratios = T[:-1, -1][pos] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + TOL * max(1.0, abs(best))]
        r = int(ties[np.argmin(basis[ties])])  # Bland: lowest basic index
        _pivot(T, basis, r, c)
        it += 1
    return "iteration_limit", it


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, upper=None,
            max_iter: int = 50000) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    rows, rhs, slack = [], [], []
    if A_ub is not None and len(A_ub):
        A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
        rows.extend(A_ub)
        rhs.extend(np.asarray(b_ub, dtype=float))
        slack.extend([True] * A_ub.shape[0])
    if upper is not None:
        upper = np.asarray(upper, dtype=float)
        for i in np.flatnonzero(np.isfinite(upper)):
            e = np.zeros(n)
            e[i] = 1.0
            rows.append(e)
            rhs.append(upper[i])
            slack.append(True)
    if A_eq is not None and len(A_eq):
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        rows.extend(A_eq)
        rhs.extend(np.asarray(b_eq, dtype=float))
        slack.extend([False] * A_eq.shape[0])
    m = len(rows)
    if m == 0:
        if np.any(c < -TOL):
            return LPResult("unbounded", None, None, 0)
        return LPResult("optimal", np.zeros(n), 0.0, 0)
    A = np.array(rows)
    b = np.array(rhs)
    n_slack = int(sum(slack))
    # columns: x | slacks | artificials | rhs
    S = np.zeros((m, n_slack))
    j = 0
    for i, s in enumerate(slack):
        if s:
            S[i, j] = 1.0
            j += 1
    neg = b < 0
    A[neg] *= -1
    S[neg] *= -1
    b[neg] *= -1
    n_main = n + n_slack
    T = np.zeros((m + 1, n_main + m + 1))
    T[:m, :n] = A
    T[:m, n:n_main] = S
    T[:m, n_main:n_main + m] = np.eye(m)
    T[:m, -1] = b
    basis = np.arange(n_main, n_main + m)
    # phase 1: minimize the sum of artificials
    T[-1, :] = -T[:m, :].sum(axis=0)
    T[-1, n_main:n_main + m] = 0.0
    status, it1 = _run(T, basis, n_main + m, max_iter)
    infeas = -T[-1, -1]
    if status != "optimal" or infeas > 1e-7 * max(1.0, np.abs(b).max()):
        return LPResult("infeasible", None, None, it1, float(infeas))
    # drive remaining artificials out of the basis where possible
    for r in range(m):
        if basis[r] >= n_main:
            nz = np.flatnonzero(np.abs(T[r, :n_main]) > TOL)
            if nz.size:
                _pivot(T, basis, r, int(nz[0]))
    keep = np.array([basis[r] < n_main for r in range(m)])
    T = np.vstack([T[:m][keep], T[-1:]])
    basis = basis[keep]
    T = np.delete(T, np.s_[n_main:n_main + m], axis=1)
    # phase 2
    T[-1, :] = 0.0
    T[-1, :n] = c
    for r, bv in enumerate(basis):
        if abs(T[-1, bv]) > 0:
            T[-1] -= T[-1, bv] * T[r]
    status, it2 = _run(T, basis, n_main, max_iter)
    if status != "optimal":
        return LPResult(status, None, None, it1 + it2)
    xfull = np.zeros(n_main)
    xfull[basis] = T[:-1, -1]
    x = np.maximum(xfull[:n], 0.0)
    return LPResult("optimal", x, float(c @ x), it1 + it2)
