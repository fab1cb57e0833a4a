"""Smooth profiles, weight vectors, symbol weights, and the weight checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyplab.errors import ConfigError
from hyplab import weights
from hyplab.weights import (chi_sqrt_eval, mode_weight_vector, nu_from_mu,
                            polynomial_weight_vector, profile_eval,
                            quantize_and_factor_check, symbol_weight,
                            temperate_check, unboundedness_demo, xi_sqrt_eval)


# ----------------------------------------------------------------------------
# Profiles
# ----------------------------------------------------------------------------


def test_w_plateaus_and_midpoint():
    assert profile_eval("w", -2.0) == 1.0
    assert profile_eval("w", 5.0) == 5.0
    assert profile_eval("w", 0.5) == pytest.approx(0.75)


def test_w_positive_and_dips_below_one():
    x = np.linspace(-1.0, 2.0, 2001)
    w = profile_eval("w", x)
    assert np.all(w > 0.0)
    assert w.min() < 1.0  # forced by the matching plateaus


def test_cutoff_plateaus():
    assert profile_eval("chi", 0.5) == 0.0
    assert profile_eval("chi", 3.0) == 1.0
    assert profile_eval("xi", -2.0) == 0.0
    assert profile_eval("xi", 0.0) == 1.0


def test_cutoffs_nondecreasing_in_unit_range():
    r = np.linspace(0.0, 3.0, 1501)
    chi = profile_eval("chi", r)
    assert np.all(np.diff(chi) >= -1e-13)
    assert np.all((chi >= 0.0) & (chi <= 1.0))
    y = np.linspace(-1.5, 0.0, 1501)
    xi = profile_eval("xi", y)
    assert np.all(np.diff(xi) >= -1e-13)
    assert np.all((xi >= 0.0) & (xi <= 1.0))


def test_spectral_bump_plateau_and_support():
    assert profile_eval("f", 0.0) == 1.0
    assert profile_eval("f", 2.0) == 1.0
    assert profile_eval("f", -2.0) == 1.0
    assert profile_eval("f", 3.5) == 0.0
    E = np.linspace(-4.0, 4.0, 801)
    f = profile_eval("f", E)
    assert np.all((f >= 0.0) & (f <= 1.0))
    assert f == pytest.approx(f[::-1])  # even


def test_sqrt_cutoffs_square_to_profiles():
    r = np.linspace(0.5, 2.5, 301)
    assert chi_sqrt_eval(r) ** 2 == pytest.approx(profile_eval("chi", r),
                                                  abs=1e-13)
    y = np.linspace(-1.2, -0.3, 301)
    assert xi_sqrt_eval(y) ** 2 == pytest.approx(profile_eval("xi", y),
                                                 abs=1e-13)


def test_derivative_order_limits():
    assert profile_eval("w", 0.3, 6) == profile_eval("w", 0.3, 6)
    with pytest.raises(ConfigError):
        profile_eval("w", 0.3, 7)
    # one extra order for internal use
    profile_eval("w", 0.3, 7, extended=True)
    with pytest.raises(ConfigError):
        profile_eval("w", 0.3, 8, extended=True)


@pytest.mark.parametrize("which,lo,hi", [("q", 0.0, 1.0), ("w", 0.0, 1.0),
                                         ("chi", 1.0, 2.0),
                                         ("xi", -1.0, -0.5)])
def test_derivatives_consistent_with_finite_differences(which, lo, hi):
    # independent oracle for the analytic derivative tables
    x = np.linspace(lo + 0.15 * (hi - lo), hi - 0.15 * (hi - lo), 41)
    d = 1e-6 * (hi - lo)
    for j in range(6):
        fd = (profile_eval(which, x + d, j) -
              profile_eval(which, x - d, j)) / (2.0 * d)
        exact = profile_eval(which, x, j + 1)
        scale = max(1.0, np.max(np.abs(exact)))
        assert np.max(np.abs(fd - exact)) <= 1e-4 * scale


@pytest.mark.parametrize("which,lo,hi", [("w", 0.0, 1.0), ("chi", 1.0, 2.0),
                                         ("xi", -1.0, -0.5)])
def test_derivatives_vanish_at_plateau_junctions(which, lo, hi):
    d = 1e-3 * (hi - lo)
    for j in range(1, 7):
        assert abs(profile_eval(which, lo - d, j)) == 0.0
        assert abs(profile_eval(which, hi + d, j)) == (
            1.0 if (which == "w" and j == 1) else 0.0)
        # just inside the transition the derivatives are tiny (smooth glue)
        assert abs(profile_eval(which, lo + 1e-4 * (hi - lo), j)) < 1e-3


# ----------------------------------------------------------------------------
# Weight vectors
# ----------------------------------------------------------------------------


def test_mode_weight_plateau_values():
    r = np.array([5.0 + math.log(2.0)])
    assert mode_weight_vector(r, 2.0, 1.0)[0] == pytest.approx(0.2)
    r = np.array([10.0 + math.log(2.0)])
    assert mode_weight_vector(r, 2.0, 2.0)[0] == pytest.approx(0.01)
    assert mode_weight_vector(np.array([3.0]), 1.5, 0.0)[0] == 1.0


def test_mode_weight_inverse_pair():
    r = np.linspace(0.25, 25.0, 400)
    for s in (0.6, 1.0, 2.0):
        prod = mode_weight_vector(r, 3.0, s) * mode_weight_vector(r, 3.0, -s)
        assert prod == pytest.approx(np.ones_like(r), rel=1e-13)


def test_mode_weight_rejects_nu_below_one():
    with pytest.raises(ConfigError):
        mode_weight_vector(np.array([1.0]), 0.5, 1.0)


def test_nu_from_mu():
    assert nu_from_mu(0.0) == 1.0
    assert nu_from_mu(3.0) == 2.0


def test_polynomial_weight():
    r = np.array([0.0, 1.0, 3.0])
    assert polynomial_weight_vector(r, 1.0) == pytest.approx(
        (1.0 + r**2) ** -0.5)


@settings(max_examples=50, deadline=None)
@given(s=st.floats(0.1, 3.0), nu=st.floats(1.0, 100.0),
       r=st.floats(-5.0, 50.0))
def test_mode_weight_bounded_by_one_property(s, nu, r):
    # w >= 1 up to the small dip; w^{-s} stays below the dip bound
    vec = mode_weight_vector(np.array([r]), nu, s)
    dip = profile_eval("w", np.linspace(0.0, 1.0, 400)).min()
    assert vec[0] <= dip ** -s + 1e-12


# ----------------------------------------------------------------------------
# Symbol weights and hyperbolic decay
# ----------------------------------------------------------------------------


def test_symbol_weight_matches_shifted_profile():
    r, eta = 4.0, 3.0
    expected = profile_eval("w", r - 0.5 * math.log(1.0 + eta**2)) ** 1.0
    assert symbol_weight(r, eta, 1.0) == pytest.approx(expected)


def _symbol_sample(n=40):
    rng = np.random.default_rng(0)
    r = rng.uniform(-10.0, 25.0, n)
    rho = rng.uniform(-4.0, 4.0, n)
    eta = rng.uniform(-60.0, 60.0, n)
    return r, rho, eta


def test_hyperbolic_symbol_decay_first_and_second_derivatives():
    # |d^a (p - z)^{-1}| <= C |p - z|^{-1} w_{-s}(r, eta) at z = -1 with a
    # single fitted C per s, via finite differences
    r, rho, eta = _symbol_sample()
    z = -1.0

    def p(rr, hh):
        return rho**2 + np.exp(-2.0 * rr) * hh**2 - z

    base = 1.0 / p(r, eta)
    d = 1e-5
    dr = (1.0 / p(r + d, eta) - 1.0 / p(r - d, eta)) / (2 * d)
    de = (1.0 / p(r, eta + d) - 1.0 / p(r, eta - d)) / (2 * d)
    drr = (1.0 / p(r + d, eta) - 2.0 * base + 1.0 / p(r - d, eta)) / d**2
    for s in (0.0, 1.0, 2.0):
        ws = np.array([symbol_weight(ri, ei, -s) for ri, ei in zip(r, eta)])
        envelope = np.abs(base) * ws
        for deriv in (dr, de, drr):
            C = np.max(np.abs(deriv) / envelope)
            assert np.isfinite(C)


def test_hyperbolic_prefactor_inequality():
    # e^{-2r} eta^2 / (rho^2 + e^{-2r} eta^2 + 1) <= C_s w_{-s}(r, eta)
    r, rho, eta = _symbol_sample(200)
    lhs = (np.exp(-2.0 * r) * eta**2
           / (rho**2 + np.exp(-2.0 * r) * eta**2 + 1.0))
    for s in (0.0, 1.0, 2.0):
        ws = np.array([symbol_weight(ri, ei, -s) for ri, ei in zip(r, eta)])
        C = np.max(lhs / ws)
        assert np.isfinite(C) and C > 0.0


# ----------------------------------------------------------------------------
# Temperate weights
# ----------------------------------------------------------------------------


def test_temperate_identity_point():
    # r = r1, eta = eta1 can never violate with C >= 1
    assert temperate_check(2000, 1.0, 1.0, seed=3, box=0.0) == []


def test_temperate_concrete_constants():
    assert temperate_check(20000, 4.0, 1.0, seed=0) == []


def test_temperate_negative_control():
    assert len(temperate_check(20000, 0.01, 0.0, seed=0)) > 0


# ----------------------------------------------------------------------------
# Quantization factorization and unboundedness
# ----------------------------------------------------------------------------


def test_quantize_identity_symbol_flat():
    table = quantize_and_factor_check(0.0, 0.0)
    assert len(table) >= 3
    assert max(table) <= 1.0 + 1e-6
    assert max(table) / min(table) <= 1.05


def test_quantize_bounded_ladder():
    table = quantize_and_factor_check(1.0, 0.0)
    assert max(table) / min(table) <= 2.0


def test_quantize_negative_control_wrong_sign():
    good = quantize_and_factor_check(1.0, 0.0)
    bad = quantize_and_factor_check(-1.0, 0.0)
    assert bad[-1] / bad[0] > 2.0 * (good[-1] / good[0])
    assert bad[-1] > 10.0 * max(good)


def test_quantize_ladder_too_short():
    with pytest.raises(ConfigError):
        quantize_and_factor_check(1.0, 0.0, levels=2)


def test_unboundedness_ratios_grow():
    ladder = [math.e**2, math.e**4, math.e**8]
    ratios = unboundedness_demo(1.0, ladder)
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    # growth about a factor 2 per step along the geometric ladder
    assert ratios[1] / ratios[0] == pytest.approx(2.0, rel=0.35)
    assert ratios[2] / ratios[1] == pytest.approx(2.0, rel=0.35)


def test_unboundedness_s_zero_flat():
    ratios = unboundedness_demo(0.0, [2.0, 4.0, 8.0])
    assert ratios == pytest.approx(np.ones(3), rel=1e-6)
