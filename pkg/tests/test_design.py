import math
from types import SimpleNamespace

import numpy as np
import pytest

from desmat.design import (InfeasibleDesignError, PreferentialDesignProblem, RegularDesignProblem,
                           alternating_step, check_regular_pair, design_preferential,
                           init_preferential, optimize_regular, pref_constraints, closed_form_bounds)
from desmat.ensembles import (GeneratingPolynomial, edge_consistency_check, mean_degree,
                              rate_ratio, ratio_identity_error)

G = GeneratingPolynomial
REF_PROBLEM = dict(n_H=100, n_L=400, k_H=10, k_L=10, dv_max=50, dc_H=5, dc_L=5)


def test_closed_form_bounds_examples():
    b1, b2 = closed_form_bounds(1000, 50)
    assert b1 == 20.0
    assert b2 == pytest.approx(1000 / (50 * math.log(20)), rel=1e-15)
    assert b2 == pytest.approx(6.6755, abs=1e-3)  # exact value 6.67616
    b1, b2 = closed_form_bounds(math.e * 10, 10)
    # the log term is 1, so the a2 bound reduces to n/k
    assert b1 == pytest.approx(math.e) and b2 == pytest.approx(math.e)
    with pytest.raises(ValueError):
        closed_form_bounds(50, 50)
    with pytest.raises(ValueError):
        closed_form_bounds(50, 0)


def test_single_degree_pair_report():
    rep = check_regular_pair(3, 8, 1000, 50)
    assert rep["a1_sq"][0] == pytest.approx(8 / 3, abs=1e-15)
    assert rep["a2"][0] == pytest.approx(8 / 3, abs=1e-15)


def test_a2_bound_is_measurement_bound():
    n, k = 1000, 50
    floor = k * math.log(n / k) / n
    for dv in range(2, 21):
        for dc in range(2, 61):
            if check_regular_pair(dv, dc, n, k)["a2"][2]:
                assert dv / dc >= floor * (1 - 1e-12)


def test_optimize_regular_rate_floor():
    res = optimize_regular(RegularDesignProblem(1000, 50), max_validations=5)
    assert res.achieved_rate >= 0.1498
    lam, rho = res.distributions["lambda"], res.distributions["rho"]
    assert lam.coeffs[1] == 0 and rho.coeffs[1] == 0
    assert res.achieved_rate == rate_ratio(lam, rho)
    assert all(ok for _, _, ok in res.constraint_report.values())


def test_optimize_regular_irregular_candidates_respect_bounds():
    res = optimize_regular(RegularDesignProblem(1000, 50), include_irregular=True, max_validations=3)
    assert res.achieved_rate >= 0.1498
    assert all(ok for _, _, ok in res.constraint_report.values())


def test_optimize_regular_dense_signal_rate_near_one():
    res = optimize_regular(RegularDesignProblem(100, 95, dv_max=4, dc_max=4), max_validations=1)
    assert res.achieved_rate == 1.0


def test_optimize_regular_infeasible_reports_binding():
    # a2 bound 0.667 needs dc < dv, impossible with dv capped at 2
    with pytest.raises(InfeasibleDesignError) as exc:
        optimize_regular(RegularDesignProblem(1000, 50, c0=10.0, dv_max=2))
    assert exc.value.binding == "a2"


def _ns(sH, sL, bH, bL):
    return SimpleNamespace(sparsity_H=sH, sparsity_L=sL, beta_H=bH, beta_L=bL)


def test_pref_constraints_examples():
    lam, rho = G.single(2), G.single(5)
    rep = pref_constraints(lam, lam, rho, rho, _ns(0.1, 0.025, 3.0, 3.0))
    assert rep["C_V"][0] == pytest.approx(50 * (0.0225 + 0.00140625), rel=1e-14)
    assert rep["C_V"][0] == pytest.approx(1.1953, abs=1e-4)
    assert not rep["C_V"][2]
    sym = pref_constraints(lam, lam, rho, rho, _ns(0.05, 0.05, 1.0, 1.0))
    assert sym["C_P"][0] == pytest.approx(0.0, abs=1e-15) and sym["C_P"][2]
    tiny = pref_constraints(G.single(8), G.single(8), rho, rho, _ns(1e-6, 1e-7, 1e-3, 1e-3))
    assert tiny["C_V"][0] < 1e-15 and tiny["C_V"][2]


def test_init_relaxed_concentrates_on_degree_two():
    p = PreferentialDesignProblem(n_H=1000, n_L=1000, k_H=2, k_L=1, dv_max=20, dc_H=2, dc_L=2)
    lam_H, lam_L = init_preferential(p)
    assert mean_degree(lam_H) == pytest.approx(2.0, abs=1e-9)


def test_init_reference_problem_is_feasible():
    p = PreferentialDesignProblem(**REF_PROBLEM)
    lam_H, lam_L = init_preferential(p)
    rep = pref_constraints(lam_H, lam_L, p.rho_H, p.rho_L, p)
    assert rep["C_V"][2] and rep["C_E"][2]
    assert lam_H.coeffs[1] == 0 and lam_L.coeffs[1] == 0
    assert ratio_identity_error(lam_H, lam_L, p.rho_H, p.rho_L, p.n_H, p.n_L) < 1e-9


def test_init_infeasible_toy():
    p = PreferentialDesignProblem(n_H=10, n_L=400, k_H=9, k_L=10, dv_max=20)
    with pytest.raises(InfeasibleDesignError) as exc:
        init_preferential(p)
    assert exc.value.binding in ("C_E", "C_V", "joint")


def test_problem_validation():
    with pytest.raises(ValueError):
        PreferentialDesignProblem(n_H=100, n_L=0, k_H=10, k_L=0)
    with pytest.raises(ValueError):
        PreferentialDesignProblem(n_H=100, n_L=400, k_H=10, k_L=40)  # H no denser than L
    with pytest.raises(ValueError):
        RegularDesignProblem(100, 100)


@pytest.fixture(scope="module")
def reference_design():
    return design_preferential(PreferentialDesignProblem(**REF_PROBLEM))


def test_design_preferential_reference_problem(reference_design):
    res = reference_design
    assert res.valid
    for key in ("lambda_H", "lambda_L"):
        assert res.distributions[key].coeffs[1] == 0
        assert sum(res.distributions[key].coeffs) == pytest.approx(1.0, abs=1e-12)
    assert all(ok for _, _, ok in res.constraint_report.values())
    assert res.constraint_report["edge_ratio"][0] <= 1e-9
    d = res.distributions
    from desmat.design import preferential_spec
    spec = preferential_spec(d["lambda_H"], d["lambda_L"], PreferentialDesignProblem(**REF_PROBLEM))
    assert edge_consistency_check(spec).satisfied


def test_design_rate_monotone(reference_design):
    h = np.asarray(reference_design.history)
    assert np.all(np.diff(h) <= 1e-9)


def test_design_rate_regression(reference_design):
    # captured at first implementation: all-degree-8 high part, all-degree-2 low part
    assert reference_design.achieved_rate == pytest.approx(0.32, abs=1e-12)
    assert reference_design.m == 160


def test_t_zero_returns_initialization():
    p = PreferentialDesignProblem(**{**REF_PROBLEM, "T": 0})
    res = design_preferential(p, validate=False)
    lam_H, lam_L = init_preferential(p)
    assert res.distributions["lambda_H"] == lam_H and res.distributions["lambda_L"] == lam_L
    assert len(res.history) == 1


def test_alternating_step_idempotent_at_optimum(reference_design):
    p = PreferentialDesignProblem(**REF_PROBLEM)
    cur = (reference_design.distributions["lambda_H"], reference_design.distributions["lambda_L"])
    for which in ("H", "L"):
        lam_H, lam_L, stalled = alternating_step(cur, which, p)
        assert not stalled
        assert lam_H == cur[0] and lam_L == cur[1]
    with pytest.raises(ValueError):
        alternating_step(cur, "X", p)


def test_report_csv(reference_design, tmp_path):
    path = tmp_path / "c.csv"
    reference_design.write_report_csv(path, comment="seed=0")
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed=0" and lines[1] == "constraint,value,bound,satisfied"
    assert {ln.split(",")[0] for ln in lines[2:]} == {"C_V", "C_E", "C_P", "edge_ratio"}
