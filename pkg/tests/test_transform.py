import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from helpers import constant_delay, s1_initial, s1_params
from sddtime import (
    InitialData,
    Params,
    Trajectory,
    alpha_bounds_check,
    alpha_inverse,
    build_alpha,
    default_omega,
    integrate_sdd,
    make_omega,
    time_equivalence_constants,
)
from sddtime.errors import CertificateRequired, EtaZero, NonMonotone, SolutionTooShort


def relaxing_delay(eta0=0.5):
    p = Params(0.4, 1.0, f=lambda t, y, yd: -yd, G=lambda y: 0.0)
    return p, InitialData(Trajectory.constant([1.0], -2.0, 0.0), eta0)


class TestOmega:
    def test_compatible_by_construction(self):
        p, init = s1_params(), s1_initial()
        om = default_omega(init, p)
        assert abs(om.compatibility_residual(p, init)) < 1e-14
        assert om.t0 == 0.0 and om.eta0 == pytest.approx(1.0)
        assert om.d0 == pytest.approx(0.5)

    def test_linear_when_delay_is_at_rest(self):
        p, init = constant_delay()
        om = default_omega(init, p)
        s = np.linspace(-2, 0, 9)
        assert np.max(np.abs(om.omega.eval(s)[:, 0] - s / 2)) < 1e-15

    def test_non_monotone_rejected(self):
        with pytest.raises(NonMonotone):
            make_omega(0.0, 2.0, 0.0, 0.1, 3.0, 3.0)

    def test_eta_zero_rejected(self):
        p = s1_params()
        with pytest.raises(EtaZero):
            default_omega(InitialData(Trajectory.constant([1.0], -2.0, 0.0), 0.0), p)


def test_first_window_against_closed_form_sigma():
    # with G = 0, sigma(t) = t - 1 - (eta0 - 1) exp(-0.4 t) in closed form
    p, init = relaxing_delay(0.5)
    om = default_omega(init, p)
    sol = integrate_sdd(p, init, 6.0, 1e-3)
    tm = build_alpha(sol, om, 4.0)
    sigma = lambda t: t - 1 + 0.5 * math.exp(-0.4 * t)
    for s in np.linspace(0.05, 2.0, 12):
        target = float(om.omega.eval(s - 2.0)[0])
        ref = brentq(lambda t: sigma(t) - target, 0.0, 5.0, xtol=1e-14)
        assert tm(s) == pytest.approx(ref, abs=1e-9)
    # second window: alpha(s) = sigma^{-1}(alpha(s - h))
    for s in np.linspace(2.1, 4.0, 7):
        ref = brentq(lambda t: sigma(t) - tm(s - 2.0), 0.0, 8.0, xtol=1e-14)
        assert tm(s) == pytest.approx(ref, abs=1e-9)


def test_slope_rule():
    p, init = relaxing_delay(0.5)
    om = default_omega(init, p)
    sol = integrate_sdd(p, init, 6.0, 1e-3)
    tm = build_alpha(sol, om, 4.0)
    s = np.linspace(0.3, 3.7, 9)
    rhs = tm.derivative(s - 2.0) / sol.sigma.derivative(tm(s))
    assert np.max(np.abs(tm.derivative(s) - rhs)) < 1e-6


def test_constant_delay_gives_half_speed():
    p, init = constant_delay(t0=1.0)
    om = default_omega(init, p, s0=3.0)
    sol = integrate_sdd(p, init, 12.0, 0.01)
    tm = build_alpha(sol, om, 20.0)
    s = np.linspace(1.0, 23.0, 501)
    assert np.max(np.abs(tm(s) - (1.0 + (s - 3.0) / 2))) < 1e-12
    assert alpha_inverse(tm, 4.0) == pytest.approx(9.0, abs=1e-12)
    assert tm.inverse_derivative(4.0) == pytest.approx(2.0)


def test_alpha_needs_certificate():
    p = Params(1.0, 1.0, f=lambda t, y, yd: -yd, G=lambda y: 0.0)
    init = InitialData(Trajectory.constant([1.0], -2.0, 0.0), 1.0)
    sol = integrate_sdd(p, init, 4.0, 0.01)
    with pytest.raises(CertificateRequired):
        build_alpha(sol, default_omega(init, p), 2.0)


def test_short_solution_detected():
    p, init = s1_params(), s1_initial()
    sol = integrate_sdd(p, init, 2.0, 0.01)
    with pytest.raises(SolutionTooShort):
        build_alpha(sol, default_omega(init, p), 10.0)


class TestBounds:
    def test_margins_constant_delay(self):
        p, init = constant_delay()
        sol = integrate_sdd(p, init, 12.0, 0.01)
        rep = alpha_bounds_check(build_alpha(sol, default_omega(init, p), 20.0), h1=1.0)
        # alpha = s/2 runs parallel to the lower line s/2 - h1 and below the upper line s + h
        assert rep.upper_margin == pytest.approx(2.0)
        assert rep.lower_margin == pytest.approx(1.0)
        assert rep.certified

    def test_s1(self, s1_pair):
        sol, ts = s1_pair
        tm = build_alpha(sol, ts.omega, 4.0)
        rep = alpha_bounds_check(tm, h1=0.5)
        assert rep.upper_pass and rep.lower_pass and rep.certified
        assert rep.upper_margin == pytest.approx(2.0)
        assert rep.lower_margin == pytest.approx(0.5)

    def test_upper_only_without_h1(self, s1_pair):
        sol, ts = s1_pair
        rep = alpha_bounds_check(build_alpha(sol, ts.omega, 4.0))
        assert rep.lower_pass is None and rep.certified is None


def test_time_equivalence_constants():
    p, init = constant_delay()
    sol = integrate_sdd(p, init, 12.0, 0.01)
    tm = build_alpha(sol, default_omega(init, p), 20.0)
    eq = time_equivalence_constants(tm, h1=1.0)
    assert eq.A1 == pytest.approx(2.0)
    assert abs(eq.B1) < 1e-9 and abs(eq.B2) < 1e-9
    assert eq.floor_envelope == pytest.approx((1.0, -2.0, 2.0, 2.0))
    assert eq.valid and eq.dual_ok and eq.floor_valid and eq.floor_dominates


@settings(max_examples=15, deadline=None)
@given(
    mu=st.floats(0.05, 0.49),
    frac=st.floats(0.0, 1.0),
    eta0=st.floats(0.2, 2.0),
    amp=st.floats(-1.5, 1.5),
)
def test_alpha_bounds_property(mu, frac, eta0, amp):
    kappa = frac * mu
    p = Params(mu, 1.0, f=lambda t, y, yd: -yd, G=lambda y: kappa * math.tanh(y[0]), g_sup=kappa)
    g = Trajectory.from_function(lambda t: np.array([1.0 + amp * math.sin(t)]),
                                 lambda t: np.array([amp * math.cos(t)]), np.linspace(-2, 0, 33))
    init = InitialData(g, eta0)
    om = default_omega(init, p)
    sol = integrate_sdd(p, init, 12.0, 0.02)
    tm = build_alpha(sol, om, 6.0)
    h1 = min(1.0 - kappa / mu, eta0)
    rep = alpha_bounds_check(tm, h1=h1 if h1 > 0 else None)
    assert rep.upper_margin >= -1e-9
    if rep.certified:
        assert rep.lower_margin >= -1e-9
    assert tm.traj.node_derivatives().min() > 0
