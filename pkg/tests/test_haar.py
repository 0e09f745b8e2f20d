import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from heatbasis import haar
from heatbasis.errors import BasisIndexError
from heatbasis.grid import DyadicGrid

from oracles import dense_haar, projection_norm_brute


def cell_vectors(level):
    return arrays(np.float64, 1 << level, elements=st.floats(-1e3, 1e3, allow_subnormal=False))


def test_index_decomposition():
    idx = haar.HaarIndex(11)
    assert (idx.k, idx.j) == (3, 3)
    assert haar.HaarIndex.from_kj(3, 3) == idx
    assert haar.HaarIndex(1).k is None
    for bad in (0, -2, 1.5):
        with pytest.raises(BasisIndexError):
            haar.HaarIndex(bad)
    with pytest.raises(BasisIndexError):
        haar.HaarIndex.from_kj(2, 5)


def test_elements_match_dense_definition():
    grid = DyadicGrid(5)
    H = dense_haar(grid.size)
    for n in range(1, grid.size + 1):
        np.testing.assert_array_equal(haar.haar(n, grid).values, H[:, n - 1])
    with pytest.raises(BasisIndexError):
        haar.haar(grid.size + 1, grid)


def test_transforms_against_dense_matrix(rng):
    size = 64
    H = dense_haar(size)
    c = rng.standard_normal(size)
    np.testing.assert_allclose(haar.synthesis(c), H @ c, atol=1e-12)
    np.testing.assert_allclose(haar.adjoint(c), H.T @ c, atol=1e-12)
    np.testing.assert_allclose(haar.analysis(c), np.linalg.solve(H, c), atol=1e-12)
    np.testing.assert_allclose(haar.adjoint_inverse(c), np.linalg.solve(H.T, c), atol=1e-12)
    np.testing.assert_array_equal(haar.support_sizes(size), (H != 0).sum(axis=0))


def test_column_wise(rng):
    c = rng.standard_normal((32, 5))
    np.testing.assert_allclose(haar.synthesis(c)[:, 3], haar.synthesis(c[:, 3]))


def test_indicator_in_haar_examples():
    grid = DyadicGrid(3)
    np.testing.assert_array_equal(haar.indicator_in_haar(1, grid), np.eye(8)[0])
    # [0, 1/2] = (e_1 + e_2)/2 and [1/2, 1] = (e_1 - e_2)/2
    np.testing.assert_allclose(haar.indicator_in_haar(2, grid), [0.5, 0.5, 0, 0, 0, 0, 0, 0])
    np.testing.assert_allclose(haar.indicator_in_haar(3, grid), [0.5, -0.5, 0, 0, 0, 0, 0, 0])
    # [0, 1/4] = e_1/4 + e_2/4 + e_3/2
    np.testing.assert_allclose(haar.indicator_in_haar(4, grid), [0.25, 0.25, 0.5, 0, 0, 0, 0, 0])
    for m in range(1, 9):
        vals = haar.synthesis(haar.indicator_in_haar(m, grid))
        assert set(np.unique(vals)) <= {0.0, 1.0}
    with pytest.raises(BasisIndexError):
        haar.indicator_in_haar(9, grid)


def test_levels():
    np.testing.assert_array_equal(haar.levels(8), [-1, 0, 1, 1, 2, 2, 2, 2])
    assert [haar.haar_level_of(n) for n in (1, 2, 3, 4, 5, 9)] == [-1, 0, 1, 1, 2, 3]


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_projection_norms_against_brute_force(rng, p):
    h = rng.standard_normal(32) * (rng.random(32) < 0.5)
    h[0] = 1.0
    got = haar.projection_norms(h, p)
    H = dense_haar(32)
    c = np.linalg.solve(H, h)
    for n in range(1, 33):
        cn = c.copy()
        cn[n:] = 0
        assert got[n - 1] == pytest.approx(np.mean(np.abs(H @ cn) ** p) ** (1 / p), rel=1e-12)
    if p == 1:
        assert got[4] == pytest.approx(projection_norm_brute(h, 5), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(cell_vectors(6))
def test_round_trip(v):
    np.testing.assert_allclose(haar.synthesis(haar.analysis(v)), v, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(cell_vectors(7), st.sampled_from([1.0, 1.5, 2.0, 3.0]))
def test_projections_contract(v, p):
    nv = np.mean(np.abs(v) ** p) ** (1 / p)
    if nv == 0:
        return
    assert haar.projection_norms(v, p).max() <= nv * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(cell_vectors(5))
def test_last_projection_is_identity(v):
    assert haar.projection_norms(v, 1.0)[-1] == pytest.approx(np.mean(np.abs(v)), rel=1e-12, abs=1e-12)
