"""Moment kernels, exact second moments and p-th moment bounds."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shelab.gaussian_kernel import heat_kernel
from shelab.initial_data import DensitySpec, InitialMeasure, j0
from shelab.moments import (MomentKernel, RhoSpec, bdg_constants, delta_I_second_moment, exact_second_moment,
                            j0sq_star_K, kernel_H, kernel_K, kernel_K_over_lam2, one_star_K,
                            pmoment_upper_bound, upsilon)


def test_frozen_kernel_values():
    # mpmath at 25 digits; H from a one-dimensional quadrature of the x-mass of K
    assert kernel_K(MomentKernel(1.0, 1.0), 1.0, 0.0) == pytest.approx(0.43453030592364549, rel=1e-14)
    assert kernel_K(MomentKernel(0.5, 1.3), 0.7, 0.4) == pytest.approx(4.8034315796416724, rel=1e-14)
    assert kernel_H(MomentKernel(1.0, 1.0), 1.0) == pytest.approx(0.95236048918255552, rel=1e-13)
    assert kernel_H(MomentKernel(0.5, 1.3), 0.7) == pytest.approx(4.0069462262402252, rel=1e-13)


kernels = st.builds(MomentKernel, st.floats(0.2, 3.0), st.floats(0.1, 2.0))


@given(kernels, st.floats(0.01, 2.0), st.floats(-3, 3))
def test_K_factorises_through_upsilon(mk, t, x):
    assert kernel_K(mk, t, x) == pytest.approx(upsilon(mk, t) * heat_kernel(mk.nu, t, x) ** 2, rel=1e-12)
    assert kernel_K(mk, t, x) == pytest.approx(mk.lam ** 2 * kernel_K_over_lam2(mk, t, x), rel=1e-12)


@given(kernels, st.floats(0.05, 2.0))
def test_H_is_space_time_mass_of_K(mk, t):
    if mk.lam ** 4 * t / (4 * mk.nu) > 5:
        return
    assert one_star_K(mk, t) == pytest.approx(kernel_H(mk, t), rel=1e-6)


def test_H_at_zero_and_lam_zero():
    assert kernel_H(MomentKernel(1.0, 1.0), 0.0) == 0.0
    mk = MomentKernel(1.3, 0.0)
    assert kernel_H(mk, 2.0) == 0.0
    assert kernel_K_over_lam2(mk, 0.4, 0.2) == pytest.approx(heat_kernel(1.3, 0.4, 0.2) ** 2, rel=1e-14)


@given(kernels, st.floats(0.05, 1.0), st.floats(-2, 2))
def test_delta_I_moment_is_second_moment_minus_J0_squared(mk, t, x):
    mu = InitialMeasure.dirac()
    total = exact_second_moment(mu, mk, 0.0, t, x)
    assert delta_I_second_moment(mk, t, x) == pytest.approx(total - j0(mu, mk.nu, t, x) ** 2,
                                                            rel=1e-9, abs=1e-300)


@pytest.mark.parametrize("mu,x", [
    (InitialMeasure.dirac(), 0.0),
    (InitialMeasure.dirac(0.4, 1.5), -0.3),
    (InitialMeasure(((0.0, 1.0), (1.0, -0.5))), 0.2),
])
def test_atom_closed_form_vs_nested_quadrature(mu, x):
    mk = MomentKernel(1.0, 1.2)
    auto = exact_second_moment(mu, mk, 0.3, 0.5, x)
    nested = exact_second_moment(mu, mk, 0.3, 0.5, x, method="nested")
    assert nested == pytest.approx(auto, rel=1e-6)


def test_lebesgue_second_moment_is_one_plus_H():
    mk = MomentKernel(1.0, 1.0)
    mu = InitialMeasure.lebesgue()
    assert exact_second_moment(mu, mk, 0.0, 0.8, 0.3) == pytest.approx(1.0 + kernel_H(mk, 0.8), rel=1e-15)
    nested = j0sq_star_K(mu, mk, 0.8, 0.3, method="quadrature")
    assert nested == pytest.approx(kernel_H(mk, 0.8), rel=1e-6)


def test_lam_zero_is_J0_squared():
    mu = InitialMeasure.from_density(DensitySpec.holder_test(0.5, 1.0))
    mk = MomentKernel(1.0, 0.0)
    assert exact_second_moment(mu, mk, 0.0, 0.3, 0.2) == pytest.approx(j0(mu, 1.0, 0.3, 0.2) ** 2, rel=1e-14)


def test_bdg_constants():
    assert bdg_constants(2, 0.0) == (1.0, 1.0)
    assert bdg_constants(4, 0.0) == (4.0, math.sqrt(2.0))
    assert bdg_constants(4, 1.0) == (4.0, 2.0 ** 0.75)
    for bad in (3, 1, 2.5, 0):
        with pytest.raises(ValueError):
            bdg_constants(bad, 0.0)


@given(st.sampled_from([2, 4, 6]), st.floats(0.05, 1.0), st.floats(-1.5, 1.5))
def test_pmoment_bound_dominates_exact_second_moment(p, t, x):
    mu = InitialMeasure.dirac()
    rho = RhoSpec.pam(1.0)
    exact = exact_second_moment(mu, rho.moment_kernel(1.0), 0.0, t, x)
    assert pmoment_upper_bound(mu, rho, p, t, x, 1.0) >= exact * (1 - 1e-12)


def test_pmoment_p2_equals_exact_for_quasi_linear():
    mu = InitialMeasure.dirac()
    rho = RhoSpec.quasi_linear(0.8, 0.5)
    assert pmoment_upper_bound(mu, rho, 2, 0.4, 0.1, 1.0) == pytest.approx(
        exact_second_moment(mu, rho.moment_kernel(1.0), 0.5, 0.4, 0.1), rel=1e-15)


@pytest.mark.parametrize("rho", [RhoSpec.quasi_linear(-0.7, 0.2), RhoSpec.pam(), RhoSpec.additive(0.3),
                                 RhoSpec.zero(), RhoSpec.lipschitz_bound(2.0, 0.5, 1.0)])
def test_rho_json_round_trip(rho):
    assert RhoSpec.from_json(rho.to_json()) == rho


def test_rho_evaluation():
    u = np.array([-2.0, 0.0, 3.0])
    np.testing.assert_allclose(RhoSpec.quasi_linear(2.0, 1.0)(u), 2.0 * np.sqrt(1.0 + u * u))
    np.testing.assert_allclose(RhoSpec.pam(0.5)(u), 0.5 * u)
    np.testing.assert_allclose(RhoSpec.additive(0.3)(u), 0.3)
    np.testing.assert_allclose(RhoSpec.custom(np.sin, 1.0, 0.0)(u), np.sin(u))
    with pytest.raises(ValueError):
        RhoSpec.lipschitz_bound(1.0)(u)
    with pytest.raises(ValueError):
        RhoSpec.custom(np.sin, 1.0, 0.0).to_json()
    with pytest.raises(ValueError):
        RhoSpec.from_json({"mode": "cubic"})


def test_moment_domain_errors():
    mk = MomentKernel(1.0, 1.0)
    with pytest.raises(ValueError):
        kernel_K(mk, 0.0, 0.0)
    with pytest.raises(ValueError):
        MomentKernel(0.0, 1.0)
    with pytest.raises(ValueError):
        delta_I_second_moment(MomentKernel(1.0, 0.0), 1.0, 0.0)
    with pytest.raises(ValueError):
        exact_second_moment(InitialMeasure.from_density(DensitySpec.power_law(1.0)), mk, 0.0, 1.0, 0.0)
