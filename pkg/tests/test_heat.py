import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatbasis.errors import DomainError, PreconditionError
from heatbasis.functionals import iterated_integral
from heatbasis.grid import GridFunction
from heatbasis.heat import (TimeSchedule, decay_fit, fit_decay, heat_evolve, kernel_derivative,
                            node_integrals, sup_norm_at, vanishing_moments, expansion_residual)

from oracles import heat_erf

IND = GridFunction.indicator(-1.0, 0.0)
DIPOLE = GridFunction.from_pieces([-2, -1, 0], [1, -1])
QUAD = GridFunction.from_pieces([-3, -2, -1, 0], [1, -2, 1])
# erf(1/2)/2 and erf(1)/2 (mpmath): u(0, 1) and u(-1/2, 1/4) for the unit indicator
U_0_1 = 0.26024993890652327
U_HALF_QUARTER = 0.5204998778130465
# (4 pi)^(-1/2)
BASELINE_RATE = 0.28209479177387814


def test_frozen_values():
    assert heat_evolve(IND, 1.0, 0.0) == pytest.approx(U_0_1, rel=1e-14)
    assert heat_evolve(IND, 0.25, -0.5) == pytest.approx(U_HALF_QUARTER, rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(-20, 20), st.floats(1e-3, 1e4))
def test_direct_matches_erf(x, t):
    f = GridFunction.from_pieces([-3.0, -1.5, -0.2, 0.0], [2.0, -1.0, 0.5])
    assert heat_evolve(f, t, x, "direct") == pytest.approx(heat_erf(f.edges, f.values, x, t),
                                                           abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([(DIPOLE, 1), (QUAD, 2)]), st.floats(-8, 4), st.floats(0.05, 200))
def test_expansion_matches_direct(case, x, t):
    f, m = case
    assert expansion_residual(f, m, t, x) <= 1e-10


def test_expansion_precondition():
    with pytest.raises(PreconditionError):
        expansion_residual(IND, 1, 1.0, 0.0)
    with pytest.raises(DomainError):
        expansion_residual(DIPOLE, -1, 1.0, 0.0)


def test_mass_conservation():
    f = GridFunction.from_pieces([-2.0, -0.5, 0.0], [1.0, 3.0])
    x = np.linspace(-60, 60, 24001)
    u = heat_evolve(f, 10.0, x, "direct")
    assert np.trapezoid(u, x) == pytest.approx(1.5 + 1.5, rel=1e-9)


def test_kernel_derivatives_by_finite_differences():
    t, h = 0.7, 1e-4
    z = np.linspace(-3, 3, 13)
    for n in range(1, 5):
        fd = (kernel_derivative(n - 1, z + h, t) - kernel_derivative(n - 1, z - h, t)) / (2 * h)
        np.testing.assert_allclose(kernel_derivative(n, z, t), fd, rtol=1e-6, atol=1e-8)
    assert kernel_derivative(0, 0.0, 1.0) == pytest.approx(BASELINE_RATE)


def test_node_integrals_match_direct_formula():
    f = GridFunction.from_pieces([-4.0, -2.5, -1.0, -0.3, 0.0], [1.0, -2.0, 0.5, 3.0])
    nodes = node_integrals(f, 4)
    for j in range(1, 5):
        np.testing.assert_allclose(nodes[j], iterated_integral(f, j, f.edges), rtol=1e-12,
                                   atol=1e-12)


def test_vanishing_moments():
    assert vanishing_moments(IND) == 0
    assert vanishing_moments(DIPOLE) == 1
    assert vanishing_moments(QUAD) == 2


def test_errors():
    with pytest.raises(DomainError):
        heat_evolve(IND, 0.0, 0.0)
    with pytest.raises(DomainError):
        heat_evolve(IND, 1.0, 0.0, method="spectral")
    with pytest.raises(DomainError):
        TimeSchedule(0.5)
    with pytest.raises(DomainError):
        TimeSchedule(1.0, 1.0)


def test_schedule_times():
    np.testing.assert_allclose(TimeSchedule(1.0, 2.0, 21).times[-1], 2.0 ** 20)


class TestSupNorm:
    def test_large_time_asymptote(self):
        t = 2.0 ** 20
        assert sup_norm_at(IND, t) == pytest.approx(BASELINE_RATE / math.sqrt(t), rel=1e-6)

    def test_small_time_is_data_sup(self):
        assert sup_norm_at(IND, 1e-4) == pytest.approx(1.0, rel=1e-6)

    def test_zero_data(self):
        assert sup_norm_at(IND.scaled(0.0), 1.0) == 0.0

    def test_methods_agree(self):
        for t in (1.0, 64.0):
            assert sup_norm_at(DIPOLE, t, "direct") == pytest.approx(sup_norm_at(DIPOLE, t),
                                                                     rel=1e-9)


class TestFit:
    def test_exact_power_law(self):
        sched = TimeSchedule(1.0, 2.0, 10)
        rep = fit_decay(sched.times, 3.0 * sched.times ** -1.25, -1.25, sched)
        assert rep.fitted_slope == pytest.approx(-1.25, abs=1e-12)
        assert rep.intercept == pytest.approx(math.log(3.0))
        assert rep.scaled_ratio == pytest.approx(1.0) and rep.verdict
        assert rep.residual_of_fit < 1e-12

    def test_slow_decay_fails(self):
        sched = TimeSchedule(1.0, 2.0, 10)
        rep = fit_decay(sched.times, sched.times ** -0.5, -1.0, sched)
        assert not rep.verdict and rep.scaled_ratio > 1.05

    def test_underflow_truncates(self):
        sched = TimeSchedule(1.0, 2.0, 8)
        norms = sched.times ** -1.0
        norms[5:] = 0.0
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rep = fit_decay(sched.times, norms, -1.0, sched)
        assert caught and len(rep.times) == 5 and rep.notes

    def test_report_serialisation(self):
        sched = TimeSchedule(1.0, 2.0, 4)
        rep = fit_decay(sched.times, sched.times ** -0.5, -0.5, sched, label="x")
        d = rep.to_dict()
        assert d["verdict"] == "pass" and d["label"] == "x"
        assert rep.to_csv().splitlines()[0] == "t,sup_norm"
        assert len(rep.to_csv().splitlines()) == 5

    @pytest.mark.parametrize("f,m", [(IND, 0), (DIPOLE, 1), (QUAD, 2)])
    def test_decay_rates(self, f, m):
        rep = decay_fit(f, TimeSchedule(1.0, 4.0, 11), m)
        assert rep.fitted_slope == pytest.approx(-(1 + m) / 2, abs=0.01)
