"""Finite-difference Monte Carlo solver."""

import math

import numpy as np
import pytest

from shelab.initial_data import DensitySpec, InitialMeasure, j0
from shelab.moments import RhoSpec
from shelab.rng import NoiseSeed
from shelab.simulator import (FieldEnsemble, GridSpec, SimulationError, concat_ensembles, ensemble_metadata,
                              initial_slice, sample_path, scheme_second_moment, simulate,
                              write_ensemble_csv)

SMALL = GridSpec.from_spacing(3.0, 0.1, 0.2, 0.0025)


def test_zero_rho_is_the_deterministic_heat_scheme():
    mu = InitialMeasure.from_density(DensitySpec.holder_test(0.5, 1.0))
    g = SMALL
    e = simulate(mu, RhoSpec.zero(), g, NoiseSeed(1), 3, save_steps=[g.nt])
    u = initial_slice(mu, g)
    coef = 0.5 * g.nu * g.dt / g.dx ** 2
    for m in range(g.nt):
        v = u.copy()
        v[1:-1] = u[1:-1] + coef * (u[2:] - 2 * u[1:-1] + u[:-2])
        v[0], v[-1] = j0(mu, 1.0, (m + 1) * g.dt, np.array([-g.L, g.L]))
        u = v
    for r in range(3):
        np.testing.assert_array_equal(e.values[r, -1], u)
    # and the scheme tracks J0 itself; the error is largest at the kink x = 0
    np.testing.assert_allclose(e.values[0, -1], e.j0_slice[-1], atol=2e-2)


def test_rerun_and_batching_are_identical():
    mu, rho = InitialMeasure.dirac(), RhoSpec.pam(1.0)
    a = simulate(mu, rho, SMALL, NoiseSeed(9), 6, save_steps=[0, 40, 80])
    b = simulate(mu, rho, SMALL, NoiseSeed(9), 6, save_steps=[0, 40, 80])
    np.testing.assert_array_equal(a.values, b.values)
    parts = [simulate(mu, rho, SMALL, NoiseSeed(9), 2, save_steps=[0, 40, 80], replica_offset=o)
             for o in (0, 2, 4)]
    joined = concat_ensembles(parts)
    np.testing.assert_array_equal(joined.values, a.values)
    np.testing.assert_array_equal(joined.replica_ids, np.arange(6))
    c = simulate(mu, rho, SMALL, NoiseSeed(10), 6, save_steps=[80])
    assert not np.array_equal(c.values[:, -1], a.values[:, -1])


def test_numpy_engine_matches_compiled():
    mu, rho = InitialMeasure.lebesgue(), RhoSpec.quasi_linear(0.7, 0.5)
    a = simulate(mu, rho, SMALL, NoiseSeed(4), 4, save_steps=[80])
    b = simulate(mu, rho, SMALL, NoiseSeed(4), 4, save_steps=[80], engine="numpy")
    np.testing.assert_allclose(a.values, b.values, rtol=1e-12, atol=1e-12)


def test_custom_rho_uses_numpy_engine():
    rho = RhoSpec.custom(lambda u: 0.5 * np.sin(u), 0.5, 0.0)
    e = simulate(InitialMeasure.lebesgue(), rho, SMALL, NoiseSeed(4), 2, save_steps=[80])
    assert np.all(np.isfinite(e.values))


@pytest.mark.parametrize("rho", [RhoSpec.pam(1.0), RhoSpec.quasi_linear(1.0, 0.5), RhoSpec.additive(0.4)])
def test_mc_second_moment_matches_scheme_moment(rho):
    """Monte Carlo E u^2 against the exactly propagated moment of the same scheme."""
    g = GridSpec.from_spacing(2.0, 0.1, 0.1, 0.0025)
    mu = InitialMeasure.lebesgue()
    nodes = [g.node_index(0.0), g.node_index(0.5)]
    exact = scheme_second_moment(mu, rho, g, [g.nt], nodes)[0]
    e = simulate(mu, rho, g, NoiseSeed(123), 4000, save_steps=[g.nt])
    u2 = e.values[:, 0, nodes] ** 2
    mc, se = u2.mean(axis=0), u2.std(axis=0, ddof=1) / math.sqrt(u2.shape[0])
    assert np.all(np.abs(mc - exact) < 4 * se)


def test_scheme_moment_close_to_continuum_for_lebesgue():
    from shelab.moments import MomentKernel, kernel_H
    g = GridSpec.from_spacing(3.0, 0.05, 0.2, 0.000625)
    m = scheme_second_moment(InitialMeasure.lebesgue(), RhoSpec.pam(1.0), g, [g.nt], [g.node_index(0.0)])
    assert m[0, 0] == pytest.approx(1.0 + kernel_H(MomentKernel(1.0, 1.0), 0.2), rel=0.02)


def test_save_window_and_indices():
    e = simulate(InitialMeasure.dirac(), RhoSpec.pam(), SMALL, NoiseSeed(2), 2, save_steps=[0, 80],
                 save_window=(-0.5, 0.5))
    np.testing.assert_allclose(e.xs, np.linspace(-0.5, 0.5, 11), atol=1e-12)
    np.testing.assert_allclose(e.times, [0.0, 0.2])
    assert e.values.shape == (2, 2, 11)
    np.testing.assert_array_equal(e.I[:, 0], 0.0)
    assert sample_path(e, 1).shape == (2, 11)
    with pytest.raises(IndexError):
        sample_path(e, 2)


def test_warm_start_marks_surrogate_slice():
    mu = InitialMeasure.from_density(DensitySpec.power_law(0.5))
    g = GridSpec.from_spacing(2.0, 0.1, 0.05, 0.0025)
    with pytest.raises(ValueError, match="warm_start"):
        simulate(mu, RhoSpec.pam(), g, NoiseSeed(0), 2)
    e = simulate(mu, RhoSpec.pam(), g, NoiseSeed(0), 2, warm_start=True, save_steps=[0, 1, 20])
    assert e.info["t0_slice"] == "surrogate_j0_dt"
    np.testing.assert_allclose(e.values[0, 1], j0(mu, 1.0, g.dt, g.xs), rtol=1e-12)


def test_overflow_raise_or_drop():
    g = SMALL
    mu, rho = InitialMeasure.lebesgue(), RhoSpec.pam(1e5)
    with pytest.raises(SimulationError) as info:
        simulate(mu, rho, g, NoiseSeed(1), 3)
    assert info.value.failures
    e = simulate(mu, rho, g, NoiseSeed(1), 3, on_failure="drop")
    assert e.replicas + len(e.info["dropped_replicas"]) == 3


def test_csv_is_byte_stable(tmp_path):
    e = simulate(InitialMeasure.dirac(), RhoSpec.pam(), SMALL, NoiseSeed(3), 2, save_steps=[80],
                 save_window=(0.0, 0.2))
    write_ensemble_csv(e, tmp_path / "a.csv")
    write_ensemble_csv(e, tmp_path / "b.csv")
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0] == "replica,t_index,x_index,value"
    assert len(lines) == 1 + 2 * 3
    assert float(lines[1].split(",")[3]) == e.values[0, 0, 0]
    meta = ensemble_metadata(e)
    assert meta["replica_ids"] == [0, 2] and meta["t_index"] == [80]


@pytest.mark.parametrize("kw", [
    dict(L=3.0, dx=0.1, t_max=0.2, dt=0.01),   # unstable
    dict(L=1.0, dx=0.1, t_max=1.0, dt=0.0025),  # truncation guard
    dict(L=3.0, dx=0.07, t_max=0.2, dt=0.0025),  # dx does not divide 2L
])
def test_grid_validation(kw):
    with pytest.raises(ValueError):
        GridSpec.from_spacing(**kw)


def test_grid_json_and_indices():
    assert GridSpec.from_json(SMALL.to_json()) == SMALL
    assert SMALL.time_index(0.1) == 40
    with pytest.raises(ValueError):
        SMALL.time_index(0.101)
    assert SMALL.xs[SMALL.node_index(0.3)] == pytest.approx(0.3)


def test_simulate_input_errors():
    with pytest.raises(ValueError):
        simulate(InitialMeasure.dirac(), RhoSpec.lipschitz_bound(1.0), SMALL, NoiseSeed(0), 1)
    with pytest.raises(ValueError):
        simulate(InitialMeasure.dirac(), RhoSpec.pam(), SMALL, NoiseSeed(0), 0)
    with pytest.raises(ValueError):
        simulate(InitialMeasure.dirac(5.0), RhoSpec.pam(), SMALL, NoiseSeed(0), 1)
    with pytest.raises(ValueError):
        concat_ensembles([])
