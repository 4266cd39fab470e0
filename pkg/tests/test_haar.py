import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from desmat.graph import HIGH, LOW
from desmat.haar import (DimensionError, HaarCoefficients, haar2d_forward, haar2d_inverse,
                         partition_coefficients, partition_sizes, unpartition_coefficients)


def _flat(c):
    return partition_coefficients(c)[0]


def test_constant_block():
    c = haar2d_forward(np.full((2, 2), 0.7))
    assert c.approximation[0, 0] == pytest.approx(1.4, abs=1e-15)
    assert all(np.all(d == 0) for d in c.details[0])


def test_column_alternation_is_horizontal_detail():
    c = haar2d_forward(np.array([[1.0, -1.0], [1.0, -1.0]]))
    lh, hl, hh = c.details[0]
    assert lh[0, 0] == pytest.approx(2.0)
    assert c.approximation[0, 0] == 0 and hl[0, 0] == 0 and hh[0, 0] == 0


@pytest.mark.parametrize("shape,levels", [((8, 8), 1), ((16, 8), 3), ((28, 28), 2)])
def test_round_trip_and_parseval(rng, shape, levels):
    img = rng.normal(size=shape)
    c = haar2d_forward(img, levels)
    assert np.max(np.abs(haar2d_inverse(c) - img)) < 1e-12
    assert np.linalg.norm(_flat(c)) == pytest.approx(np.linalg.norm(img), abs=1e-10)
    assert c.levels == levels


def test_orthonormality(rng):
    u, v = rng.normal(size=(2, 16, 16))
    assert _flat(haar2d_forward(u, 2)) @ _flat(haar2d_forward(v, 2)) == pytest.approx(
        np.sum(u * v), abs=1e-10)


def test_dimension_errors():
    with pytest.raises(DimensionError):
        haar2d_forward(np.zeros((6, 6)), levels=2)
    with pytest.raises(DimensionError):
        haar2d_forward(np.zeros(4))
    c = haar2d_forward(np.zeros((4, 4)))
    bad = HaarCoefficients(c.approximation, ((np.zeros((1, 1)),) * 3,), c.shape)
    with pytest.raises(DimensionError):
        haar2d_inverse(bad)


@pytest.mark.parametrize("shape,sizes", [((28, 28), (196, 588)), ((32, 32), (256, 768)),
                                         ((2, 2), (1, 3))])
def test_partition_sizes(shape, sizes):
    assert partition_sizes(shape) == sizes
    vec, labels = partition_coefficients(haar2d_forward(np.ones(shape)))
    assert ((labels == HIGH).sum(), (labels == LOW).sum()) == sizes
    assert np.all(labels[:sizes[0]] == HIGH)


def test_partition_inverse(rng):
    c = haar2d_forward(rng.normal(size=(16, 16)), 2)
    vec, _ = partition_coefficients(c)
    back = unpartition_coefficients(vec, c)
    assert np.array_equal(haar2d_inverse(back), haar2d_inverse(c))
    with pytest.raises(DimensionError):
        unpartition_coefficients(vec[:-1], c)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (8, 16), elements=st.floats(-1e3, 1e3)), st.integers(1, 3))
def test_property_round_trip(img, levels):
    c = haar2d_forward(img, levels)
    assert np.allclose(haar2d_inverse(unpartition_coefficients(_flat(c), c)), img, rtol=0, atol=1e-9)
