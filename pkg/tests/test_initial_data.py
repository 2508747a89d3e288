"""Initial measures, growth classification and the homogeneous solution J0."""

import json
import math

import numpy as np
import pytest
from hypothesis import example, given, strategies as st
from scipy import integrate

from shelab.gaussian_kernel import heat_kernel
from shelab.initial_data import (DensitySpec, InitialMeasure, classify, j0, log_exp_power_convolution,
                                 measure_from_json, measure_to_json, power_law_j0, power_law_j0_origin,
                                 read_density_csv)


def test_power_law_frozen_values():
    # mpmath: direct quadrature of |y|^-a G(t, x - y) (a = 0.25) and mpmath.hyp1f1 (a = 0.75)
    assert power_law_j0_origin(0.25, 1.0, 0.1) == pytest.approx(1.6354022170388231, rel=1e-14)
    assert power_law_j0(0.25, 1.0, 0.1, 0.3) == pytest.approx(1.4788750275883256, rel=1e-13)
    assert power_law_j0(0.75, 2.0, 0.5, -0.4) == pytest.approx(3.0880118773855213, rel=1e-13)


@given(st.floats(0.05, 0.95), st.floats(0.1, 3.0), st.floats(0.01, 2.0), st.floats(-3.0, 3.0))
@example(0.0625, 1.0, 1.0, 3.7814051166900106e-114)  # scipy hyp1f1 overflows for tiny arguments
def test_power_law_closed_form_vs_quadrature(a, nu, t, x):
    mu = InitialMeasure.from_density(DensitySpec.power_law(a))
    closed = j0(mu, nu, t, x)
    quad = j0(mu, nu, t, x, method="quadrature")
    assert quad == pytest.approx(closed, rel=1e-7)


def test_exponential_growth_bimodal_regression():
    """For a wide kernel exp(|z|^1.5) N(1 - z; 4) has a peak on each side of 0;
    missing the left one halves the answer. mpmath reference."""
    mu = InitialMeasure.from_density(DensitySpec.exponential_growth(1.0, 1.0, 1.5))
    assert j0(mu, 1.0, 4.0, 1.0) == pytest.approx(3.6229988586307384e27, rel=1e-9)
    assert math.exp(log_exp_power_convolution(1.0, 1.5, 4.0, 1.0)) == pytest.approx(3.6229988586307384e27,
                                                                                    rel=1e-9)


@given(st.floats(0.01, 5.0), st.floats(0.1, 10.0), st.floats(-4.0, 4.0))
def test_exp_power_a_equals_one_closed_form(c, var, y):
    # int e^{c|z|} N(y - z; var) dz in closed form through Phi
    from scipy.special import log_ndtr
    sd = math.sqrt(var)
    lp = c * y + 0.5 * c * c * var + log_ndtr(y / sd + c * sd)
    lm = -c * y + 0.5 * c * c * var + log_ndtr(-y / sd + c * sd)
    assert log_exp_power_convolution(c, 1.0, var, y) == pytest.approx(float(np.logaddexp(lp, lm)), abs=1e-9)


def test_exp_power_degenerate_cases():
    assert log_exp_power_convolution(2.0, 1.5, 0.0, -2.0) == pytest.approx(2.0 * 2.0 ** 1.5)
    assert log_exp_power_convolution(0.0, 1.5, 1.0, 3.0) == 0.0
    assert log_exp_power_convolution(0.7, 0.0, 1.0, 3.0) == 0.7
    with pytest.raises(ValueError):
        log_exp_power_convolution(1.0, 2.0, 1.0, 0.0)


@given(st.floats(0.1, 1.0), st.floats(0.5, 3.0), st.floats(0.05, 2.0), st.floats(-3.0, 3.0))
@example(0.109375, 3.0, 1.0, 0.0)
def test_holder_density_against_scipy(alpha, cap, t, x):
    mu = InitialMeasure.from_density(DensitySpec.holder_test(alpha, cap))
    f = lambda z: min(abs(z) ** alpha, cap) * heat_kernel(1.0, t, x - z)
    # truncate at 40 sd; the cap radius can be huge, so break at the kernel peak too
    sd = math.sqrt(t)
    lo, hi = x - 40 * sd, x + 40 * sd
    r = cap ** (1 / alpha)
    cuts = sorted({lo, hi, x} | {c for c in (-r, 0.0, r) if lo < c < hi})
    ref = sum(integrate.quad(f, a, b, limit=400, epsabs=1e-13)[0] for a, b in zip(cuts, cuts[1:]))
    assert j0(mu, 1.0, t, x) == pytest.approx(ref, rel=1e-7, abs=1e-10)


def test_atoms_and_constant():
    mu = InitialMeasure(((0.5, 2.0), (-1.0, -0.5)), DensitySpec.constant(3.0))
    x = np.array([-1.0, 0.0, 2.0])
    ref = 2.0 * heat_kernel(1.5, 0.4, x - 0.5) - 0.5 * heat_kernel(1.5, 0.4, x + 1.0) + 3.0
    np.testing.assert_allclose(j0(mu, 1.5, 0.4, x), ref, rtol=1e-14)
    assert j0(mu, 1.5, 0.4, 0.0, use_abs=True) == pytest.approx(
        2.0 * heat_kernel(1.5, 0.4, -0.5) + 0.5 * heat_kernel(1.5, 0.4, 1.0) + 3.0)


@given(st.floats(-3, 3), st.floats(0.1, 2.0), st.floats(0.1, 2.0))
def test_heat_semigroup_for_atoms(x, t, s):
    mu = InitialMeasure.dirac(0.3)
    lhs = j0(mu, 1.0, t + s, x)
    rhs = integrate.quad(lambda z: j0(mu, 1.0, t, z) * heat_kernel(1.0, s, x - z), -np.inf, np.inf,
                         epsabs=1e-13)[0]
    assert rhs == pytest.approx(lhs, rel=1e-8, abs=1e-12)


def test_tabulated_interpolation_and_csv(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("x,f\n-1,0\n0,1\n1,0\n")
    d = read_density_csv(p)
    assert d.kind == "tabulated"
    assert d.evaluate(0.5) == pytest.approx(0.5)
    assert d.evaluate(3.0) == 0.0
    mu = InitialMeasure.from_density(d)
    # total mass 1: J0 integrates to 1 in x
    mass = integrate.quad(lambda x: j0(mu, 1.0, 0.2, x), -8, 8, limit=200)[0]
    assert mass == pytest.approx(1.0, rel=1e-7)


def test_csv_bad_row(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("0,1\n1,oops\n")
    with pytest.raises(ValueError):
        read_density_csv(p)


@pytest.mark.parametrize("kind,params", [
    ("power_law", {"a": 1.5}),
    ("exponential_growth", {"c1": 1, "c2": 1, "a": 2.0}),
    ("exponential_growth", {"c1": 1, "c2": 1, "a": 0.5}),
    ("holder_test", {"alpha": 0.0, "cap": 1}),
    ("holder_test", {"alpha": 0.5, "cap": 0}),
    ("tabulated", {"xs": [0, 0], "fs": [1, 1]}),
    ("mystery", {}),
])
def test_density_validation(kind, params):
    with pytest.raises(ValueError):
        DensitySpec(kind, params)


def test_measure_validation():
    with pytest.raises(ValueError):
        InitialMeasure(())
    with pytest.raises(ValueError):
        InitialMeasure(((0.0, 0.0),))
    with pytest.raises(ValueError):
        j0(InitialMeasure.from_density(DensitySpec.power_law(1.0)), 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        j0(InitialMeasure.dirac(), 1.0, 0.0, 0.0)


def test_classification():
    assert classify(InitialMeasure.dirac()) == classify(InitialMeasure.dirac(1.0))
    assert not classify(InitialMeasure.dirac()).in_MH_star
    c = classify(InitialMeasure.from_density(DensitySpec.holder_test(0.2, 2)))
    assert c.in_MH_star and c.bounded_density and c.holder_alpha == 0.2
    assert classify(InitialMeasure.lebesgue()).holder_alpha == 1.0
    e = classify(InitialMeasure.from_density(DensitySpec.exponential_growth(1, 1, 1.5)))
    assert e.in_MH and e.in_MH_star and not e.bounded_density
    assert not classify(InitialMeasure.from_density(DensitySpec.power_law(1.0))).in_MH


measures = st.sampled_from([
    InitialMeasure.dirac(), InitialMeasure.lebesgue(2.0), InitialMeasure.zero(),
    InitialMeasure(((1.0, -2.0),), DensitySpec.power_law(0.3, scale=-1.0)),
    InitialMeasure.from_density(DensitySpec.exponential_growth(0.5, 1.0, 1.2)),
    InitialMeasure.from_density(DensitySpec.holder_test(0.2, 2.0)),
    InitialMeasure.from_density(DensitySpec.tabulated([0, 1, 2], [1, -1, 0.5])),
])


@given(measures)
def test_json_round_trip(mu):
    assert measure_from_json(measure_to_json(mu)) == mu
    assert json.loads(measure_to_json(mu)) == json.loads(json.dumps(mu.to_json(), sort_keys=True))


@given(measures, st.floats(0.05, 2.0), st.floats(-2, 2))
def test_abs_measure_dominates(mu, t, x):
    assert abs(j0(mu, 1.0, t, x)) <= j0(mu, 1.0, t, x, use_abs=True) * (1 + 1e-12) + 1e-300
