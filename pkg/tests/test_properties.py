"""Randomized invariants across modules."""
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from desmat.decoder import error_ratios
from desmat.density_evolution import DEStateRegular, de_step_lasso, ensemble_summary
from desmat.design import PreferentialDesignProblem, InfeasibleDesignError, design_preferential
from desmat.ensembles import (GeneratingPolynomial, RegularEnsembleSpec, edge_consistency_check,
                              mean_degree)
from desmat.graph import GraphConstructionError, build_graph, check_realization, graph_to_matrix
from desmat.priors import SpikeDiscrete

G = GeneratingPolynomial
weights = st.lists(st.floats(0.0, 1.0), min_size=3, max_size=12).filter(lambda w: sum(w[2:]) > 1e-3)


def _poly(w):
    return G.from_array([0.0, 0.0] + list(w[2:]), normalize=True)


@settings(max_examples=60, deadline=None)
@given(weights)
def test_simplex_closure(w):
    p = _poly(w)
    c = np.asarray(p.coeffs)
    assert np.all(c >= 0) and abs(c.sum() - 1.0) < 1e-12


@settings(max_examples=60, deadline=None)
@given(weights, weights)
def test_cauchy_schwarz_a1_sq_le_a2(wl, wr):
    s = ensemble_summary(_poly(wl), _poly(wr))
    assert s.a1**2 <= s.a2 * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(2, 60))
def test_single_degree_a1_sq_equals_a2(dv, dc):
    s = ensemble_summary(G.single(dv), G.single(dc))
    assert s.a1**2 == pytest.approx(dc / dv, rel=1e-14)
    assert s.a2 == pytest.approx(dc / dv, rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(weights, st.integers(2, 12), st.integers(50, 2000))
def test_counting_duality(wl, dc, n):
    spec = RegularEnsembleSpec.from_n(_poly(wl), G.single(dc), n)
    rep = edge_consistency_check(spec, slack=dc)
    # rounding m moves the check side by at most half a check node
    assert rep.satisfied
    assert abs(mean_degree(spec.lam) * spec.n - dc * spec.m) <= dc / 2 + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(4, 10), st.integers(20, 200), st.integers(0, 2**31))
def test_sampled_graphs_are_simple_and_deterministic(dv, dc, n, seed):
    spec = RegularEnsembleSpec.from_n(G.single(dv), G.single(dc), n)
    assume(spec.m >= dv)
    try:
        g = build_graph(spec, seed)
    except GraphConstructionError:
        assume(False)
    rep = check_realization(g, spec)
    assert rep["simple"] and rep["edge_duality"]
    g2 = build_graph(spec, seed)
    assert np.array_equal(g.edge_var, g2.edge_var) and np.array_equal(g.edge_chk, g2.edge_chk)
    M = graph_to_matrix(g, spec.sensing_scale_A, seed)
    assert M.rows.size == g.var_degrees.sum() == g.check_degrees.sum()


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-6, 10.0), st.floats(1e-6, 10.0), st.floats(0.1, 5.0), st.floats(0.1, 10.0),
       st.floats(0.1, 6.0))
def test_lasso_step_nonnegative_finite(E, V, a1, a2, beta):
    out = de_step_lasso(DEStateRegular(E, V), a1, a2, beta, SpikeDiscrete(0.05, 1.0))
    assert np.isfinite(out.E) and np.isfinite(out.V)
    assert out.E >= 0 and out.V >= 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4),
       st.lists(st.floats(-10, 10), min_size=4, max_size=4), st.floats(1e-3, 1e3))
def test_error_ratios_scale_invariant(est, truth, c):
    est, truth = np.array(est), np.array(truth)
    part = np.array([1, 1, 2, 2])
    assume(np.linalg.norm(truth[:2]) > 1e-3)
    a = error_ratios(est, truth, part)
    b = error_ratios(c * est, c * truth, part)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)
    assert a[0] >= 0 and a[1] >= 0


@settings(max_examples=15, deadline=None)
@given(st.integers(50, 200), st.integers(200, 600), st.integers(2, 12), st.integers(2, 12),
       st.integers(3, 7), st.integers(3, 7))
def test_alternating_descent_non_increasing(n_H, n_L, k_H, k_L, dc_H, dc_L):
    assume(k_H / n_H > k_L / n_L)
    try:
        p = PreferentialDesignProblem(n_H, n_L, k_H, k_L, 30, dc_H, dc_L, T=6)
        res = design_preferential(p, validate=False)
    except InfeasibleDesignError:
        assume(False)
    h = np.asarray(res.history)
    assert np.all(np.diff(h) <= 1e-9)
    for key in ("lambda_H", "lambda_L"):
        c = np.asarray(res.distributions[key].coeffs)
        assert c[1] == 0 and abs(c.sum() - 1) < 1e-12 and np.all(c >= 0)
