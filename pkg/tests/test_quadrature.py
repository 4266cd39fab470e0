import numpy as np
import pytest
from scipy import stats

from desmat.quadrature import gauss_hermite, segmented_normal_rule


def test_gauss_hermite_normal_moments():
    z, w = gauss_hermite(61)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    for k, ref in [(2, 1.0), (4, 3.0), (6, 15.0)]:
        assert np.sum(w * z**k) == pytest.approx(ref, rel=1e-12)


def test_segmented_rule_integrates_kinked_function():
    # E[max(z - t, 0)] = phi(t) - t Q(t)
    t = 0.37
    z, w = segmented_normal_rule(np.array([[t]]), 30)
    got = np.sum(w * np.maximum(z - t, 0.0))
    ref = stats.norm.pdf(t) - t * stats.norm.sf(t)
    assert got == pytest.approx(ref, abs=1e-14)


def test_segmented_rule_beats_plain_hermite_on_kinks():
    t = 0.37
    ref = stats.norm.pdf(t) - t * stats.norm.sf(t)
    zg, wg = gauss_hermite(30)
    plain = abs(np.sum(wg * np.maximum(zg - t, 0.0)) - ref)
    z, w = segmented_normal_rule(np.array([[t]]), 30)
    seg = abs(np.sum(w * np.maximum(z - t, 0.0)) - ref)
    assert seg < 1e-12 < plain
