"""Energies, weighted fluxes, decay monitors and the identity checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nullwave import CoefficientTensor, preset
from nullwave.diagnostics import (RATES, DiagnosticsSink, csv_header, cutoff, decay_monitors,
                                  drift_ratio, energy_identity_residual, fit_slope,
                                  hardy_check, hessian, localized_cone_flux,
                                  null_identity_residual, random_hardy_profile, sandwich_holds,
                                  sideris_bound_check, staggered_energy, support_crop,
                                  weighted_energy_and_flux)
from nullwave.errors import InsufficientHistory, NotNull, SupportViolation
from nullwave.grid import Grid2D, TimeHistory, default_table
from nullwave.solver import SolverConfig, run


def history(fn, L=4.0, h=1.0 / 16, t=3.0, dt=1.0 / 64, depth=5, order=2):
    grid = Grid2D.square(L, h)
    times = t + dt * (np.arange(depth) - depth // 2)
    return TimeHistory([fn(s, grid.X1, grid.X2) for s in times], times, grid, dt, order)


def packet(t, X1, X2):
    return np.exp(-2 * ((X1 - 0.5 * t) ** 2 + X2 ** 2)) * np.cos(X1 - t)


@pytest.fixture(scope="module")
def linear_run():
    cfg = SolverConfig(epsilon=0.01, h=1.0 / 16, L=10.0, t_final=10.0)
    sink = DiagnosticsSink(m=2)
    record = run(cfg, sink)
    assert record.completed
    return sink


# -- energies ------------------------------------------------------------------------

def test_staggered_energy_of_plane_wave_rate():
    # u = t has |du|^2 = 1 everywhere; the energy is the area where levels are nonzero
    hist = history(lambda t, X1, X2: t + 0 * X1, L=1.0, h=0.25)
    E = staggered_energy(hist)
    assert E == pytest.approx(hist.grid.n ** 2 * 0.25 ** 2, rel=1e-6)


def test_energies_are_cumulative(linear_run):
    row = linear_run.reports[3]
    assert len(row.energies) == 3
    assert row.energies[0] <= row.energies[1] <= row.energies[2]


def test_linear_energies_are_conserved(linear_run):
    E0 = linear_run.column("E0")
    assert np.max(np.abs(E0 / E0[0] - 1)) < 1e-12


def test_higher_energies_stay_near_initial_value(linear_run):
    # the vector fields commute with the wave operator up to truncation error
    E2 = linear_run.column("E2")
    assert drift_ratio(E2) < 1.2


def test_drift_ratio():
    assert drift_ratio([2.0, 3.0, 1.0]) == 1.5
    assert drift_ratio([]) == 1.0 and drift_ratio([0.0, 1.0]) == 1.0


# -- ghost weight terms -------------------------------------------------------------------

def test_sandwich_and_flux_sign_on_run(linear_run):
    assert all(r.sandwich_ok for r in linear_run.reports)
    assert np.all(linear_run.column("flux") >= 0)
    assert np.all(np.diff(linear_run.column("flux_cum")) >= 0)


def test_sandwich_bounds():
    qinf = default_table().q_inf
    assert sandwich_holds(1.0, 1.0)
    assert sandwich_holds(math.exp(qinf), 1.0) and not sandwich_holds(math.exp(qinf) * 1.01, 1.0)
    assert not sandwich_holds(math.exp(-qinf) * 0.99, 1.0)


def test_weighted_terms_of_outgoing_wave():
    # an exactly outgoing profile has small good derivatives, hence small flux
    out = history(lambda t, X1, X2: np.exp(-4 * (np.hypot(X1, X2) - t) ** 2), L=6.0)
    inc = history(lambda t, X1, X2: np.exp(-4 * (np.hypot(X1, X2) + t - 6) ** 2), L=6.0)
    W_out, F_out = weighted_energy_and_flux(out)
    W_in, F_in = weighted_energy_and_flux(inc)
    assert W_out > 0 and W_in > 0
    assert F_out / W_out < 0.05 * F_in / W_in


def test_energy_identity_residual_converges():
    # packet is not a solution, so the identity holds with its own box v
    res = []
    for h in (1.0 / 8, 1.0 / 16, 1.0 / 32):
        hist = history(packet, h=h, dt=h / 4)
        res.append(energy_identity_residual(hist))
    assert res[1] < res[0] / 3 and res[2] < res[1] / 3


def test_identity_residual_needs_five_levels():
    with pytest.raises(InsufficientHistory):
        energy_identity_residual(history(packet, depth=3))


# -- decay monitors --------------------------------------------------------------------

def test_decay_monitors_fields(linear_run):
    mon = linear_run.reports[-1]
    for key in RATES:
        assert getattr(mon, key) > 0
    with pytest.raises(InsufficientHistory):
        decay_monitors(history(packet, depth=3), m=2)


def test_fit_slope_recovers_power():
    t = np.linspace(10, 50, 41)
    assert fit_slope(t, 3 * t ** -0.5) == pytest.approx(-0.5)
    assert fit_slope(t, t ** -1.5, window=(20, 40)) == pytest.approx(-1.5)
    with pytest.raises(ValueError):
        fit_slope(t, np.zeros_like(t))


def test_hessian_of_quadratic():
    hist = history(lambda t, X1, X2: t * t + 3 * X1 * X2 - X2 ** 2 + t * X1)
    H = hessian(hist)
    inner = (slice(4, -4), slice(4, -4))
    assert np.allclose(H[(0, 0)], 2.0)
    assert np.allclose(H[(0, 1)][inner], 1.0) and np.allclose(H[(1, 2)][inner], 3.0)
    assert np.allclose(H[(2, 2)][inner], -2.0)


def test_sideris_ratio_finite_on_run(linear_run):
    ratios = linear_run.column("sideris_ratio")
    assert np.all(np.isfinite(ratios)) and np.all(ratios > 0)
    with pytest.raises(InsufficientHistory):
        sideris_bound_check(history(packet, depth=3))


def test_support_crop_keeps_nonzero_values():
    grid = Grid2D.square(4.0, 0.25)
    f = np.where(grid.r < 1.0, 1.0, 0.0)
    hist = TimeHistory([f, f, f], [0.0, 0.1, 0.2], grid, 0.1)
    small = support_crop(hist, pad=2)
    assert small.grid.n < grid.n and small.current.sum() == f.sum()
    empty = TimeHistory([0 * f] * 3, [0.0, 0.1, 0.2], grid, 0.1)
    assert support_crop(empty, pad=2).grid.n == 5


# -- cone localization -------------------------------------------------------------------------

def test_cutoff_plateau_and_support():
    z = np.array([0.0, 0.3, 0.34, 0.7, 1.0, 1.49, 1.9, 2.0, 3.0])
    c = cutoff(z)
    assert c[0] == c[1] == 0.0 and c[-1] == c[-2] == 0.0
    assert np.allclose(c[3:6], 1.0)
    assert 0 < c[2] < 1 and 0 < c[6] < 1


def test_localized_cone_flux_symbols():
    hist = history(packet)
    value, h_max, tang_max = localized_cone_flux(hist, preset("FA0"))
    assert h_max == 2.0 and tang_max == 0.0 and value != 0.0
    value, h_max, tang_max = localized_cone_flux(hist, preset("FB1"))
    assert value == 0.0 and h_max == 0.0 and tang_max == 0.0
    value, h_max, tang_max = localized_cone_flux(hist, preset("FD3"))
    assert value == 0.0 and h_max == 0.0 and tang_max == pytest.approx(1.0)


# -- identity and Hardy -------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["FA0", "FB1", "FC2", "FD3", "GC0"])
def test_null_identity_exact_on_quadratics(name):
    grid = Grid2D.square(3.0, 1.0 / 8)
    f = lambda t, X1, X2: t * X1 + X2 ** 2 - 0.5 * t * t
    hf = lambda t, X1, X2: X1 * X2 + t * X2 + 0.25 * X1 ** 2
    assert null_identity_residual(preset(name), f, hf, grid, 3.0) < 1e-9


def test_null_identity_refines_on_smooth_data():
    f = lambda t, X1, X2: np.exp(-(X1 - 1) ** 2 - X2 ** 2) * np.sin(t)
    res = [null_identity_residual(preset("FD3"), f, f, Grid2D.square(3.0, h), 3.0)
           for h in (1.0 / 8, 1.0 / 16, 1.0 / 32)]
    assert all(3.0 <= res[k] / res[k + 1] <= 5.0 for k in range(2))


def test_null_identity_rejects_non_null():
    grid = Grid2D.square(1.0, 0.25)
    g = CoefficientTensor.from_dict({(0, 0, 0): 1})
    with pytest.raises(NotNull):
        null_identity_residual(g, packet, packet, grid, 1.0)


def test_hardy_reference_profile():
    M = 3
    lhs, rhs = hardy_check(lambda r: (M + 1 - r) ** 2, M, lambda r: -2 * (M + 1 - r))
    assert 0 < lhs < 4 * rhs


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), M=st.integers(0, 12))
def test_hardy_random_profiles(seed, M):
    f, df = random_hardy_profile(np.random.default_rng(seed), M)
    lhs, rhs = hardy_check(f, M, df)
    assert lhs <= 4 * rhs + 1e-8


def test_hardy_rejects_unsupported_profile():
    with pytest.raises(SupportViolation):
        hardy_check(lambda r: 1.0, 2)


# -- CSV -------------------------------------------------------------------------------

def test_csv_output(linear_run, tmp_path):
    path = tmp_path / "d.csv"
    with open(path, "w", newline="") as fh:
        linear_run.write_csv(fh)
    header = path.read_text().splitlines()[0].split(",")
    assert header == csv_header(2)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (len(linear_run.reports), len(header))
    assert np.allclose(data[:, 0], np.arange(2.0, 10.5))
