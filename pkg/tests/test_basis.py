import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from heatbasis import haar
from heatbasis.basis import (BasisState, basis_constant_estimate, basis_projection, dual_hnorm,
                             hnorm, read_basis, read_basis_csv, write_basis, write_basis_csv)
from heatbasis.errors import BasisIndexError, ConfigurationError, DataError, ParseError
from heatbasis.functionals import cell_moments
from heatbasis.grid import HALFLINE, DyadicGrid, Weight, grid_masses, weighted_norm

from oracles import dense_haar

vectors = arrays(np.float64, 64, elements=st.floats(-100, 100, allow_subnormal=False))


@settings(max_examples=60, deadline=None)
@given(vectors, vectors, st.sampled_from([1.0, 2.0, 3.0]))
def test_dual_norm_bounds_pairing(u, h, p):
    assert abs(u @ h) <= dual_hnorm(u, p) * hnorm(h, p) * (1 + 1e-12) + 1e-9


def test_hnorm_is_mean_norm():
    h = np.array([1.0, -3.0, 0.0, 2.0])
    assert hnorm(h, 1) == pytest.approx(1.5)
    assert hnorm(h, 2) == pytest.approx(np.sqrt(3.5))


class TestHaarState:
    def test_elements(self):
        b = BasisState.haar(DyadicGrid(5))
        np.testing.assert_array_equal(b.element_matrix(), dense_haar(32))
        np.testing.assert_array_equal(b.element_values(7), dense_haar(32)[:, 6])
        with pytest.raises(BasisIndexError):
            b.element_values(33)

    def test_projection(self, rng):
        b = BasisState.haar(DyadicGrid(5))
        h = rng.standard_normal(32)
        H = dense_haar(32)
        c = np.linalg.solve(H, h)
        c[11:] = 0
        np.testing.assert_allclose(b.project(h, 11), H @ c, atol=1e-12)
        np.testing.assert_allclose(b.project(h, 32), h, atol=1e-12)
        with pytest.raises(BasisIndexError):
            b.project(h, 33)


class TestPerturbedState:
    def test_coordinates_invert_elements(self, small_built):
        basis, _ = small_built
        E = basis.element_matrix()
        np.testing.assert_allclose(basis.coordinates(E), np.eye(basis.dimension), atol=1e-10)
        np.testing.assert_allclose(basis.combine(np.eye(basis.dimension)), E, atol=1e-12)

    def test_adjoint_coordinates(self, small_built, rng):
        basis, _ = small_built
        q, h = rng.standard_normal((2, basis.dimension))
        # q . z(h) = (C^-T q) . (Haar coefficients of h)
        assert q @ basis.coordinates(h) == pytest.approx(basis.coordinates_adjoint(q) @ haar.analysis(h),
                                                         rel=1e-10)
        gamma = rng.standard_normal(basis.dimension)
        np.testing.assert_allclose(basis.functional_values(gamma), basis.element_matrix().T @ gamma,
                                   atol=1e-10)

    def test_head_elements_are_untouched(self, small_built):
        basis, cert = small_built
        haar_basis = BasisState.haar(basis.grid, basis.p, basis.weight)
        head = np.arange(1, cert.thresholds[0])
        np.testing.assert_array_equal(basis.element_values(head), haar_basis.element_values(head))

    def test_moments_vanish_past_thresholds(self, small_built):
        basis, cert = small_built
        rows = basis.halfline_rows()
        mass = grid_masses(basis.grid, basis.weight)
        norms = np.abs(rows) @ mass
        for k, n0 in enumerate(cert.thresholds, 1):
            res = np.abs(rows[n0 - 1:] @ cell_moments(basis.grid.log_nodes, k))
            assert np.all(res <= 1e-10 * norms[n0 - 1:])
            # and not trivially: the element just before the threshold carries the moment
            assert abs(rows[n0 - 2] @ cell_moments(basis.grid.log_nodes, k)) > 1e-8

    def test_all_projection_norms_against_dense(self, small_built, rng):
        basis, _ = small_built
        E = basis.element_matrix()
        h = rng.standard_normal(basis.dimension)
        z = np.linalg.solve(E, h)
        got = basis.all_projection_norms(h)
        for n in (1, 2, 3, 17, 18, 100, 129, 130, 256):
            zn = z.copy()
            zn[n:] = 0
            assert got[n - 1] == pytest.approx(hnorm(E @ zn, basis.p), rel=1e-10)

    def test_basis_constant_estimate(self, small_built):
        basis, cert = small_built
        est = basis_constant_estimate(basis, samples=8)
        assert 1.0 <= est.value <= cert.basis_constant_bound
        with pytest.raises(DataError):
            basis_constant_estimate(basis, samples=0)

    def test_halfline_projection(self, small_built, rng):
        basis, _ = small_built
        f = basis.grid.function(rng.standard_normal(basis.dimension), HALFLINE)
        # compare in the weighted norm: the transfer factors span ten decades
        err = basis_projection(f, basis.dimension, basis) - f
        assert weighted_norm(err, 1, basis.weight) <= 1e-13 * weighted_norm(f, 1, basis.weight)
        with pytest.raises(DataError):
            basis_projection(DyadicGrid(4).function(np.ones(16), HALFLINE), 3, basis)


class TestFiles:
    def test_round_trip(self, small_built, tmp_path):
        basis, _ = small_built
        path = tmp_path / "b.bin"
        write_basis(path, basis)
        bf = read_basis(path)
        assert (bf.dimension, bf.p, bf.level) == (256, 1.0, 8)
        assert list(bf.thresholds) == list(basis.thresholds)
        np.testing.assert_array_equal(bf.rows, basis.halfline_rows())

    def test_csv_round_trip(self, small_built, tmp_path):
        basis, _ = small_built
        write_basis_csv(tmp_path / "b.csv", basis)
        np.testing.assert_array_equal(read_basis_csv(tmp_path / "b.csv"), basis.halfline_rows())

    def test_truncated_and_bad_magic(self, small_built, tmp_path):
        basis, _ = small_built
        path = tmp_path / "b.bin"
        write_basis(path, basis)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(ParseError):
            read_basis(path)
        path.write_bytes(b"NOTBASIS" + blob[8:])
        with pytest.raises(ParseError):
            read_basis(path)
        with pytest.raises(ConfigurationError):
            read_basis(tmp_path / "missing.bin")


def test_state_validation():
    g = DyadicGrid(3)
    with pytest.raises(DataError):
        BasisState(g, 1.0, Weight.gauss_exp(), np.zeros((8, 1)), np.zeros((8, 2)))
    with pytest.raises(DataError):
        BasisState(g, 1.0, Weight.gauss_exp(), np.zeros((8, 0)), np.zeros((8, 0)), thresholds=(3, 3))
