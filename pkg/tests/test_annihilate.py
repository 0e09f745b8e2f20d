import numpy as np
import pytest

from heatbasis.annihilate import (AnnihilationCertificate, PerturbationPlan,
                                  build_annihilating_basis, composed_norm, distance_from_haar,
                                  gram_schmidt_annihilating, halfline_norms, mirror_basis,
                                  mirrored_moments, mirrored_norms, perturbation_step,
                                  restricted_dual_norm, sampled_dual_norm, shrinking_check,
                                  split_exponents)
from heatbasis.basis import BasisState, hnorm
from heatbasis.errors import ConfigurationError, DomainError, ResolutionExhausted
from heatbasis.functionals import cell_moments, representer, transfer_factors
from heatbasis.grid import DyadicGrid, Weight
from heatbasis.verify import dense_distance

from oracles import l1_restricted_dual, l2_restricted_dual

W = Weight.gauss_exp()


def block_dual(gamma, n):
    """Haar, p = 1, span{e_1..e_n} with n dyadic: D max over blocks of |block mean|."""
    return len(gamma) * np.abs(gamma.reshape(n, -1).mean(axis=1)).max()


def block_oscillation(gamma, n):
    """||y o (id - P_n)|| for Haar, p = 1, n dyadic: P_n is block averaging."""
    B = gamma.reshape(n, -1)
    return len(gamma) * np.abs(B - B.mean(axis=1, keepdims=True)).max()


class TestDualNorms:
    @pytest.mark.parametrize("lo,hi", [(0, 8), (16, 256), (5, 100), (128, 256)])
    def test_l1_against_min_norm_extension(self, small_built, lo, hi):
        basis, _ = small_built
        # J^3 is not annihilated by this basis, so every range is live
        gamma = representer(3, W, basis.grid).pairing_vector(1.0)
        got = restricted_dual_norm(basis, gamma, lo, hi)
        E = basis.element_matrix()
        assert got.value == pytest.approx(l1_restricted_dual(E, gamma, slice(lo, hi)), rel=1e-7)
        assert hnorm(got.element, 1.0) == pytest.approx(1.0)
        assert gamma @ got.element == pytest.approx(got.value, rel=1e-7)

    @pytest.mark.parametrize("lo,hi", [(0, 8), (16, 256), (5, 100)])
    def test_l2_against_gram_solve(self, small_built_l2, lo, hi):
        basis, _ = small_built_l2
        gamma = representer(2, W, basis.grid).pairing_vector(2.0)
        got = restricted_dual_norm(basis, gamma, lo, hi)
        E = basis.element_matrix()
        assert got.value == pytest.approx(l2_restricted_dual(E, gamma, slice(lo, hi)), rel=1e-9)
        assert gamma @ got.element == pytest.approx(got.value, rel=1e-9)

    def test_haar_closed_form(self):
        basis = BasisState.haar(DyadicGrid(10), 1.0, W)
        gamma = representer(2, W, basis.grid).pairing_vector(1.0)
        for n in (1, 4, 64):
            assert restricted_dual_norm(basis, gamma, 0, n).value == pytest.approx(
                block_dual(gamma, n), rel=1e-9)

    def test_sampled_is_lower_bound(self, small_built):
        basis, _ = small_built
        gamma = representer(1, W, basis.grid).pairing_vector(1.0)
        exact = restricted_dual_norm(basis, gamma, 0, 32).value
        assert sampled_dual_norm(basis, gamma, 0, 32, samples=500) <= exact * (1 + 1e-12)

    def test_zero_and_bad_ranges(self, small_built):
        basis, _ = small_built
        gamma = representer(1, W, basis.grid).pairing_vector(1.0)
        # J^1 vanishes on everything past the first threshold
        n0 = basis.thresholds[0]
        assert restricted_dual_norm(basis, gamma, n0 - 1).value == 0.0
        with pytest.raises(DomainError):
            restricted_dual_norm(basis, gamma, 10, 10)
        with pytest.raises(DomainError):
            restricted_dual_norm(basis, gamma, 0, 8, p=2.0)


class TestComposedNorm:
    @pytest.mark.parametrize("m", [1, 2, 3, 4])
    def test_haar_block_oscillation(self, m):
        basis = BasisState.haar(DyadicGrid(10), 1.0, W)
        gamma = representer(m, W, basis.grid).pairing_vector(1.0)
        for n in (1, 2, 8, 256):
            assert composed_norm(basis, gamma, n) == pytest.approx(block_oscillation(gamma, n),
                                                                   rel=1e-12)
        assert composed_norm(basis, gamma, basis.dimension) == 0.0

    def test_zero_on_annihilated_tail(self, small_built):
        basis, cert = small_built
        for k, n0 in enumerate(cert.thresholds, 1):
            gamma = representer(k, W, basis.grid).pairing_vector(1.0)
            q = basis.functional_values(gamma)
            assert np.abs(q[n0 - 1:]).max() <= 1e-12 * np.abs(q).max()


class TestDistance:
    @pytest.mark.parametrize("fixture", ["small_built", "small_built_l2"])
    def test_matches_dense(self, request, fixture):
        basis, cert = request.getfixturevalue(fixture)
        lower, upper = distance_from_haar(basis)
        assert lower == pytest.approx(upper)
        f = transfer_factors(basis.grid, basis.weight, basis.p)
        dense = dense_distance(basis.halfline_rows(), f, basis.p)
        assert upper == pytest.approx(dense, rel=1e-9)
        assert cert.transform_distance == pytest.approx(upper)

    def test_haar_is_zero(self):
        assert distance_from_haar(BasisState.haar(DyadicGrid(4))) == (0.0, 0.0)


class TestStep:
    def test_single_step_annihilates(self):
        basis = BasisState.haar(DyadicGrid(8), 1.0, W)
        gamma = representer(1, W, basis.grid).pairing_vector(1.0)
        new, N, rec = perturbation_step(basis, gamma, 0, 0.5, order=1)
        q = new.functional_values(gamma)
        assert np.abs(q[N:]).max() <= 1e-13 * np.abs(q).max()
        assert rec.rho < 0.5 and rec.N == N
        # elements 1..N are unchanged
        np.testing.assert_array_equal(new.element_values(np.arange(1, N + 1)),
                                      basis.element_values(np.arange(1, N + 1)))

    def test_unchanged_when_already_zero(self, small_built):
        basis, cert = small_built
        gamma = representer(1, W, basis.grid).pairing_vector(1.0)
        L = cert.thresholds[-1]
        new, N, rec = perturbation_step(basis, gamma, L, 0.5)
        assert rec.unchanged and N == L + 1 and new.rank == basis.rank

    def test_exhausted(self):
        basis = BasisState.haar(DyadicGrid(4), 1.0, W)
        gamma = representer(1, W, basis.grid).pairing_vector(1.0)
        with pytest.raises(ResolutionExhausted):
            perturbation_step(basis, gamma, 0, 1e-9)


class TestPlan:
    def test_split_exponents(self):
        assert split_exponents(12, 4) == [3, 6, 9, 11]
        assert split_exponents(8, 2) == [4, 7]
        assert split_exponents(3, 2) == [1, 2]

    def test_validation(self):
        for kw in ({"epsilon": 0.0, "m_max": 2}, {"epsilon": 1.0, "m_max": 2},
                   {"epsilon": 0.5, "m_max": -1}, {"epsilon": 0.5, "m_max": 2, "schedule": "x"},
                   {"epsilon": 0.5, "m_max": 2, "delta_schedule": (0.1,)}):
            with pytest.raises(ConfigurationError):
                PerturbationPlan(**kw)

    def test_geometric_deltas(self):
        plan = PerturbationPlan(0.5, 3, "geometric")
        assert plan.delta(2, 2.0) == pytest.approx(0.5 / 16 / 2.0)
        plan.check(1.0)
        with pytest.raises(ConfigurationError):
            PerturbationPlan(0.5, 2, delta_schedule=(0.6, 0.6)).check(1.0)

    def test_candidates(self):
        assert PerturbationPlan(0.5, 2, "geometric").candidates(1, 3, 32) == [4, 8, 16]
        assert PerturbationPlan(0.5, 2).candidates(2, 16, 256) == [128]


class TestBuild:
    def test_certificate(self, small_built):
        basis, cert = small_built
        assert cert.violations() == []
        assert list(cert.thresholds) == list(basis.thresholds)
        assert cert.transform_distance < cert.epsilon
        assert cert.basis_constant_after <= cert.basis_constant_bound + 1e-9
        back = AnnihilationCertificate.from_dict(cert.to_dict())
        assert back.to_dict() == cert.to_dict()

    def test_tampered_certificate(self, small_built):
        _, cert = small_built
        d = cert.to_dict()
        d["residuals"][0][0] = 1.0
        assert AnnihilationCertificate.from_dict(d).violations()

    def test_geometric_schedule_exhausts_with_partial(self):
        initial = BasisState.haar(DyadicGrid(8), 1.0, W)
        with pytest.raises(ResolutionExhausted) as exc:
            build_annihilating_basis(initial, PerturbationPlan(0.5, 2, "geometric"), constant_samples=2)
        assert exc.value.partial["thresholds"]

    def test_deterministic(self):
        initial = BasisState.haar(DyadicGrid(7), 2.0, W)
        a = build_annihilating_basis(initial, PerturbationPlan(0.5, 2), constant_samples=4)[1]
        b = build_annihilating_basis(initial, PerturbationPlan(0.5, 2), constant_samples=4)[1]
        assert a.to_dict() == b.to_dict()


class TestShrinking:
    def test_l2_haar_strictly_decreasing(self):
        basis = BasisState.haar(DyadicGrid(10), 2.0, W)
        for m in range(1, 5):
            rep = shrinking_check(basis, representer(m, W, basis.grid))
            assert rep.strictly_decreasing and rep.reaches_zero and rep.passed

    def test_l1_haar_matches_block_oscillation(self):
        basis = BasisState.haar(DyadicGrid(10), 1.0, W)
        for m in range(1, 5):
            gamma = representer(m, W, basis.grid).pairing_vector(1.0)
            rep = shrinking_check(basis, gamma)
            ref = [block_oscillation(gamma, n) if n < 1024 else 0.0 for n in rep.schedule]
            np.testing.assert_allclose(rep.norms, ref, rtol=1e-12, atol=1e-15)
            assert rep.passed

    def test_l1_first_steps_can_rise(self):
        # near s = 0 the representer is flat while the coarse block means move,
        # so the first dyadic step increases the norm for J^2
        basis = BasisState.haar(DyadicGrid(10), 1.0, W)
        rep = shrinking_check(basis, representer(2, W, basis.grid))
        assert rep.norms[1] > rep.norms[0]
        assert not rep.strictly_decreasing and rep.eventually_decreasing

    def test_schedule_validation(self):
        basis = BasisState.haar(DyadicGrid(4), 1.0, W)
        with pytest.raises(DomainError):
            shrinking_check(basis, representer(1, W, basis.grid), [4, 2])


class TestGramSchmidt:
    def test_orthonormal_and_annihilating(self):
        grid = DyadicGrid(7)
        basis = gram_schmidt_annihilating(W, 3, grid)
        E = basis.element_matrix()
        np.testing.assert_allclose(E.T @ E / grid.size, np.eye(grid.size), atol=1e-10)
        rows = basis.halfline_rows()
        norms = halfline_norms(basis)
        for m, n0 in enumerate(basis.thresholds, 1):
            res = np.abs(rows[n0 - 1:] @ cell_moments(grid.log_nodes, m))
            assert np.all(res <= 1e-10 * norms[n0 - 1:])
        assert basis.thresholds == (2, 3, 4)


class TestMirror:
    def test_involution_and_moments(self, small_built):
        basis, _ = small_built
        mb = mirror_basis(basis)
        assert mirror_basis(mb) is basis
        np.testing.assert_array_equal(mb.reflect(), basis.halfline_rows())
        for m in (1, 2):
            np.testing.assert_allclose(mirrored_moments(mb, m),
                                       basis.halfline_rows() @ cell_moments(basis.grid.log_nodes, m),
                                       rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(mirrored_norms(mb, W, 1.0), halfline_norms(basis), rtol=1e-12)
