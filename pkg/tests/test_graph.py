import numpy as np
import pytest

from desmat.ensembles import GeneratingPolynomial, PreferentialEnsembleSpec, RegularEnsembleSpec
from desmat.graph import (HIGH, LOW, FactorGraph, GraphConstructionError, build_graph,
                          check_realization, graph_to_matrix, largest_remainder_counts,
                          read_triplets, sample_degree_sequence, sample_matrix)

G = GeneratingPolynomial


def test_degree_sequence_single_degree():
    seq = sample_degree_sequence(G.single(3), 10, seed=1)
    assert seq.tolist() == [3] * 10


def test_degree_sequence_largest_remainder():
    lam = G.from_pairs({1: 1 / 3, 2: 2 / 3})
    assert sorted(sample_degree_sequence(lam, 3, seed=4).tolist()) == [1, 2, 2]
    # one slot goes to the modal degree
    assert sample_degree_sequence(G.from_pairs({2: 0.3, 5: 0.7}), 1).tolist() == [5]


def test_largest_remainder_sums_to_count():
    p = G.from_pairs({2: 0.21, 3: 0.33, 7: 0.46})
    for count in (1, 2, 7, 13, 100, 997):
        c = largest_remainder_counts(p, count)
        assert c.sum() == count
        assert np.all(np.abs(c - p.array() * count) < 1.0)


def test_biregular_4x3():
    spec = RegularEnsembleSpec(G.single(3), G.single(4), 4, 3)
    g = build_graph(spec, seed=0)
    assert g.is_simple()
    assert g.var_degrees.tolist() == [3] * 4
    assert g.check_degrees.tolist() == [4] * 3
    assert check_realization(g, spec)["ok"]


def test_forced_double_edge_raises():
    # two degree-2 variables and one check: any simple realization would need m >= 2
    spec = RegularEnsembleSpec(G.single(2), G.single(4), 2, 1)
    with pytest.raises(GraphConstructionError):
        build_graph(spec, seed=0)


def _pref_spec(n_H=40, n_L=105, dc_H=2, dc_L=3):
    return PreferentialEnsembleSpec.from_distributions(
        G.from_pairs({3: 0.5, 4: 0.5}), G.from_pairs({2: 1.0}), G.single(dc_H), G.single(dc_L),
        n_H, n_L)


def test_preferential_wiring_split():
    spec = _pref_spec()
    g = build_graph(spec, seed=3)
    rep = check_realization(g, spec)
    assert rep["simple"] and rep["partition_wiring"]
    assert np.all(rep["check_H_degrees"] == 2)
    assert np.all(rep["check_L_degrees"] == 3)
    assert (g.partition == HIGH).sum() == 40 and (g.partition == LOW).sum() == 105


def test_edge_duality_and_matrix_support():
    spec = RegularEnsembleSpec.from_n(G.from_pairs({2: 0.4, 3: 0.6}), G.from_pairs({6: 1.0}), 300)
    g, M = sample_matrix(spec, seed=9)
    assert g.var_degrees.sum() == g.check_degrees.sum() == g.edge_count == M.rows.size
    dense = M.to_dense()
    support = np.zeros((g.m, g.n), dtype=bool)
    support[g.edge_chk, g.edge_var] = True
    assert np.array_equal(dense != 0, support)
    assert np.allclose(np.abs(dense[support]), 1 / np.sqrt(spec.sensing_scale_A), rtol=0, atol=1e-15)
    assert set(np.unique(M.signs).tolist()) <= {-1.0, 1.0}


def test_biregular_row_and_column_norms():
    dv, dc = 3, 6
    spec = RegularEnsembleSpec(G.single(dv), G.single(dc), 600, 300, sensing_scale_A=dc)
    _, M = sample_matrix(spec, seed=2)
    D = M.to_dense()
    assert np.allclose(np.linalg.norm(D, axis=1), 1.0, atol=1e-14)
    assert np.allclose(np.linalg.norm(D, axis=0), np.sqrt(dv / dc), atol=1e-14)


def test_single_edge_and_empty_graph():
    g = FactorGraph(1, 1, np.array([0]), np.array([0]), np.zeros(1, dtype=np.int8))
    M = graph_to_matrix(g, 4.0, seed=0)
    assert abs(M.to_dense()[0, 0]) == 0.5
    empty = FactorGraph(3, 2, np.array([], dtype=np.int64), np.array([], dtype=np.int64),
                        np.zeros(3, dtype=np.int8))
    assert not graph_to_matrix(empty, 1.0).to_dense().any()
    with pytest.raises(ValueError):
        graph_to_matrix(g, 0.0)


def test_sign_balance():
    spec = RegularEnsembleSpec(G.single(4), G.single(8), 5000, 2500)
    _, M = sample_matrix(spec, seed=11)
    assert M.signs.size >= 10_000
    assert abs((M.signs > 0).mean() - 0.5) < 0.02


def test_determinism():
    spec = _pref_spec()
    g1, M1 = sample_matrix(spec, seed=5)
    g2, M2 = sample_matrix(spec, seed=5)
    assert np.array_equal(g1.edge_var, g2.edge_var) and np.array_equal(g1.edge_chk, g2.edge_chk)
    assert np.array_equal(M1.signs, M2.signs)
    _, M3 = sample_matrix(spec, seed=6)
    assert not (np.array_equal(M1.cols, M3.cols) and np.array_equal(M1.signs, M3.signs))


def test_triplet_round_trip(tmp_path):
    spec = RegularEnsembleSpec(G.single(3), G.single(6), 40, 20)
    g, M = sample_matrix(spec, seed=1)
    path = tmp_path / "m.txt"
    M.write_triplets(path)
    assert path.read_text().splitlines()[0] == f"20 40 {6.0!r} 1"
    back = read_triplets(path)
    assert np.array_equal(back.to_dense(), M.to_dense())
    assert back.sensing_scale_A == M.sensing_scale_A and back.seed == 1
    adj = tmp_path / "adj.txt"
    g.write_adjacency(adj)
    lines = adj.read_text().splitlines()
    assert lines[0] == "# n=40 m=20" and len(lines) == 2 + 20


def test_rounding_mismatch_is_patched():
    # 7 * 2.5 = 17.5 variable stubs against 3 checks of degree 6
    spec = RegularEnsembleSpec(G.from_pairs({2: 0.5, 3: 0.5}), G.single(6), 7, 3)
    g = build_graph(spec, seed=0)
    assert g.is_simple()
    assert g.var_degrees.sum() == g.check_degrees.sum() == g.edge_count
    assert check_realization(g, spec)["edge_duality"]
