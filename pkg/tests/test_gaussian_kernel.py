"""Heat kernel, special functions and closed-form Gaussian identities.

Reference numbers were produced with mpmath at 25 digits (direct quadrature
of the defining integrals, or mpmath's own special functions) and frozen here.
"""

import math

import numpy as np
import pytest
from hypothesis import assume, example, given, strategies as st
from scipy import integrate

from shelab import gaussian_kernel as gk
from shelab.gaussian_kernel import (KernelParams, arcsin_time_integral, beta_time_integral, erf, erfc,
                                    gamma_fn, heat_kernel, heat_kernel_squared, heat_kernel_total,
                                    product_identity, std_normal_cdf, sup_ratio_constant,
                                    time_convolution_bound, time_convolution_closed_form,
                                    time_integral_closed_form, variation_bounds, variation_integrals)

pos = st.floats(0.05, 5.0)
real = st.floats(-3.0, 3.0)


# frozen mpmath values
def test_frozen_special_values():
    assert heat_kernel(2.0, 0.5, 1.0) == pytest.approx(0.24197072451914335, rel=1e-15)
    assert std_normal_cdf(1.0) == pytest.approx(0.84134474606854295, rel=1e-15)
    assert erf(1.0) == pytest.approx(0.84270079294971487, rel=1e-15)
    assert gamma_fn(0.25) == pytest.approx(3.6256099082219083, rel=1e-15)
    assert beta_time_integral(1.5, 0.5, 2.0) == pytest.approx(math.pi, rel=1e-14)


def test_frozen_time_identities():
    assert time_convolution_closed_form(1, 1, 1, 1, 1) == pytest.approx(0.022750131948179207, rel=1e-13)
    assert time_convolution_closed_form(0.7, 1.9, 1.2, 0.3, -0.5) == pytest.approx(0.22121824013760099, rel=1e-13)
    assert time_integral_closed_form(1.5, 2.0, 0.8) == pytest.approx(0.48454777155711383, rel=1e-13)
    assert arcsin_time_integral(1.0, 3.0) == pytest.approx(1.9106332362490140, rel=1e-14)


def test_sup_ratio_constant():
    c = sup_ratio_constant()
    assert c == pytest.approx(0.45125623407830819, rel=1e-12)
    assert 0.45125 <= c <= 0.45126


def test_kernel_params_validation():
    assert heat_kernel(KernelParams(2.0), 0.5, 1.0) == heat_kernel(2.0, 0.5, 1.0)
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            KernelParams(bad)
    with pytest.raises(ValueError):
        heat_kernel(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        heat_kernel(1.0, 1.0, math.nan)


def test_total_kernel_zero_before_time_zero():
    out = heat_kernel_total(1.0, np.array([-1.0, 0.0, 1.0]), 0.0)
    assert out[0] == 0.0 and out[1] == 0.0 and out[2] == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_erfc_tail_no_cancellation():
    # erfc(10) ~ 2.088e-45 would be 0 through 1 - erf
    assert erfc(10.0) == pytest.approx(2.0884875837625447e-45, rel=1e-13)


def test_vectorised_kernel():
    xs = np.linspace(-2, 2, 5)
    np.testing.assert_allclose(heat_kernel(1.3, 0.4, xs), [heat_kernel(1.3, 0.4, x) for x in xs], rtol=1e-15)


@given(pos, pos, real)
def test_kernel_unit_mass_and_square(nu, t, x):
    mass = integrate.quad(lambda y: heat_kernel(nu, t, y), -np.inf, np.inf, epsabs=1e-13)[0]
    assert mass == pytest.approx(1.0, abs=1e-9)
    assert heat_kernel_squared(nu, t, x) == pytest.approx(heat_kernel(nu, t, x) ** 2, rel=1e-12, abs=1e-300)


@given(pos, pos, pos, real, real)
def test_product_identity(nu, t, s, x, y):
    (t1, x1), (t2, x2) = product_identity(nu, t, s, x, y)
    lhs = heat_kernel(nu, t, x) * heat_kernel(nu, s, y)
    rhs = heat_kernel(nu, t1, x1) * heat_kernel(nu, t2, x2)
    assert rhs == pytest.approx(lhs, rel=1e-11, abs=1e-300)


# for large |x|, |y| the integrand is a narrow spike QUADPACK complains about;
# the comparison below still holds at its tolerance
@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@given(pos, pos, pos, real, real)
def test_time_convolution_matches_quadrature(nu, sigma, t, x, y):
    # both factors blow up like an inverse square root at the ends; QUADPACK's
    # algebraic weight absorbs (s (t - s))^(-1/2)
    f = lambda s: (heat_kernel_total(nu, s, x) * heat_kernel_total(sigma, t - s, y)
                   * math.sqrt(max(s * (t - s), 0.0)))
    ref = integrate.quad(f, 0, t, weight="alg", wvar=(-0.5, -0.5), epsabs=1e-13, epsrel=1e-11, limit=200)[0]
    assert time_convolution_closed_form(nu, sigma, t, x, y) == pytest.approx(ref, rel=1e-7, abs=1e-11)


@given(pos, pos, pos, real)
def test_time_convolution_gaussian_bound(nu, sigma, t, y):
    assert gk.time_convolution_origin(nu, sigma, t, y) <= time_convolution_bound(nu, sigma, t, y) * (1 + 1e-12)


@given(pos, pos, real)
@example(1.0, 1.0, 0.00044123981637571704)
@example(1.0, 1.0, 1e-05)
@example(0.5, 1.0, 1.11167154046692e-178)
def test_time_integral_matches_quadrature(nu, t, x):
    # s = r^2 removes the inverse square root; for small |x| the integrand
    # switches on over a few multiples of r = |x|/sqrt(nu), so break
    # geometrically from there
    g = lambda r: 2.0 * r * heat_kernel_total(nu, r * r, x)
    rt = math.sqrt(t)
    kink = abs(x) / math.sqrt(nu)
    pts = [kink * 2.0 ** k for k in range(-2, 60) if 0.0 < kink * 2.0 ** k < rt] or None
    ref = integrate.quad(g, 0, rt, points=pts, epsabs=1e-13, limit=400)[0]
    assert time_integral_closed_form(nu, t, x) == pytest.approx(ref, rel=1e-7, abs=1e-11)


@given(st.floats(0.0, 1.0), pos)
def test_arcsin_integral_bounded_by_pi(frac, tp):
    v = arcsin_time_integral(frac * tp, tp)
    assert 0.0 <= v <= math.pi + 1e-15


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), pos)
def test_beta_integral_matches_gamma_ratio(a, b, t):
    ref = t ** (a + b - 1) * gamma_fn(a) * gamma_fn(b) / gamma_fn(a + b)
    assert beta_time_integral(a, b, t) == pytest.approx(ref, rel=1e-12)


@given(pos, st.floats(0.0, 1.0), pos, real, real)
def test_variation_bounds_hold(nu, frac, t, x, y):
    s = frac * t
    vals = variation_integrals(nu, s, t, x, y)
    bounds = variation_bounds(nu, s, t, x, y)
    for v, b in zip(vals, bounds):
        assert v <= b * (1 + 1e-9) + 1e-12


@given(pos, st.floats(0.01, 0.99), pos, real, real)
def test_variation_integrals_against_closed_forms(nu, frac, t, x, y):
    assume(abs(x - y) > 1e-3)
    s = frac * t
    v = variation_integrals(nu, s, t, x, y)
    ex = gk.variation_integrals_exact(nu, s, t, x, y)
    for a, b in zip(v[:3], ex):
        assert a == pytest.approx(b, rel=1e-6, abs=1e-10)


def test_variation_first_integral_frozen():
    # mpmath: direct double integral over (a, z), nu = t = 1, |x - y| = 0.7
    v = variation_integrals(1.0, 0.0, 1.0, 0.7, 0.0)[0]
    assert v == pytest.approx(0.5645280174572855, rel=1e-9)


@pytest.mark.parametrize("call", [
    lambda: time_convolution_closed_form(0.0, 1.0, 1.0, 0.0, 0.0),
    lambda: variation_integrals(1.0, 2.0, 1.0, 0.0, 0.0),
    lambda: arcsin_time_integral(2.0, 1.0),
    lambda: beta_time_integral(0.0, 1.0, 1.0),
    lambda: gamma_fn(-0.5),
    lambda: product_identity(1.0, 0.0, 1.0, 0.0, 0.0),
])
def test_domain_errors(call):
    with pytest.raises(ValueError):
        call()


def test_kernel_at_subnormal_time():
    # nu * t underflows to zero here; mpmath reference values
    assert heat_kernel_total(0.5, 5e-324, 0.0) == pytest.approx(2.538240300160582e+161, rel=1e-14)
    assert heat_kernel(0.5, 1e-310, 1e-160) == pytest.approx(5.641895834913382e+154, rel=1e-14)
    assert heat_kernel(0.5, 5e-324, 1.0) == 0.0
