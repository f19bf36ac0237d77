import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from app.errors import CalibrationError
from app.fields.base import VectorField
from app.profile.flushing import (
    LEAK_TOLERANCE,
    angular_speed,
    calibrate_K,
    calibrate_M,
    closed_form_M,
    flushing_base_field,
    harmonic_potential,
)


def test_harmonic_potential_matches_log(grid):
    q = harmonic_potential(grid, 2.0)
    exact = 2.0 * np.log(grid.R / grid.r_inner) / grid.log_ratio
    np.testing.assert_allclose(q.values, exact, atol=1e-3)
    np.testing.assert_allclose(q.values[0], 0.0, atol=1e-12)
    np.testing.assert_allclose(q.values[-1], 2.0)


def test_harmonic_potential_rejects_zero(grid):
    with pytest.raises(ValueError):
        harmonic_potential(grid, 0.0)


def test_base_field_is_clockwise_and_tangential(grid):
    y = flushing_base_field(grid, 1.0)
    np.testing.assert_allclose(y.radial(), 0.0, atol=1e-14)
    np.testing.assert_allclose(angular_speed(y), -1.0 / (grid.log_ratio * grid.R**2), rtol=1e-12)


def test_calibrated_M_agrees_with_closed_form(profile, layout, grid):
    exact = closed_form_M(grid, 1.0, layout.d_lambda)
    assert profile.M == pytest.approx(exact, rel=0.05)
    assert profile.M <= profile.diagnostics["M_prefilter"] * 1.5
    # one period of y* drags no node farther than d_lambda/2
    assert profile.diagnostics["dragging_passed"]
    assert profile.diagnostics["dragging_margin"] > 0.0


def test_K_covers_a_full_turn(profile, grid):
    slowest = profile.M / (grid.log_ratio * grid.r_outer**2)
    assert profile.K == max(2, math.ceil(2.0 * math.pi / slowest) + 1)
    assert profile.K0 == pytest.approx(1.0 / (8.0 * profile.K))
    assert profile.diagnostics["flushing_passed"]
    assert profile.diagnostics["latest_crossing"] < 1.0


def test_calibration_errors(grid):
    y = flushing_base_field(grid, 1.0)
    with pytest.raises(CalibrationError):
        calibrate_M(y, 0.0)
    with pytest.raises(CalibrationError):
        calibrate_M(VectorField.zeros(grid), 0.3)
    with pytest.raises(CalibrationError):
        calibrate_K(VectorField.zeros(grid), 0.1)
    with pytest.raises(CalibrationError):
        closed_form_M(grid, 1.0, 10.0)


def test_amplitude_has_area_M_and_rests_at_period_end(profile):
    period = profile.period
    t = np.linspace(0.0, period, 4001)
    assert trapezoid(profile.lam(t), t) == pytest.approx(profile.M, rel=1e-3)
    assert np.all(profile.lam(t) >= 0.0)
    quiet = np.linspace(period - 2.0 * profile.K0, period, 7)
    np.testing.assert_array_equal(profile.lam(quiet), 0.0)
    np.testing.assert_allclose(profile.lam(t[:50] + 3 * period), profile.lam(t[:50]), rtol=1e-9, atol=1e-9)


def test_velocity_series_follows_amplitude(profile):
    times = profile.times(0.0, profile.period)
    y = profile.velocity_series(times)
    for index, t in enumerate(times):
        expected = profile.y_base * float(profile.lam(t))
        np.testing.assert_allclose(y.at(index).x, expected.x, rtol=1e-12, atol=1e-12)


def test_xi_star_stays_inside_omega(profile, layout):
    assert profile.diagnostics["xi_leak"] <= LEAK_TOLERANCE
    t = 0.25 * profile.period
    xi = profile.xi_star(t)
    assert xi.sup() > 0.0
    assert np.max(xi.magnitude()[~layout.omega_mask]) <= LEAK_TOLERANCE * xi.sup()


def test_euler_residual_at_peak(profile, grid):
    peak = 0.5 * (profile.period - 2.0 * profile.K0)
    residual = profile.euler_residual(peak)
    lam = float(profile.lam(peak))
    # centripetal scale lambda^2 |y_base|^2 / r
    scale = lam**2 / (grid.log_ratio**2 * grid.r_inner**3)
    assert np.max(residual.magnitude()[2:-2]) <= 0.05 * scale


def test_cutoffs_and_stability_radii(profile):
    beta, sigma = profile.cutoff_beta(), profile.cutoff_sigma()
    period, K0 = profile.period, profile.K0
    assert beta(0.0) == 1.0 and beta(period) == 0.0
    assert sigma(period - 2.5 * K0) == 0.0 and sigma(period) == 1.0
    assert profile.gamma_halfwidth() == pytest.approx(0.25 * period)
    assert 0.0 < profile.nu0 <= profile.layout.d_lambda / (4.0 * profile.K)
    assert 0.0 <= profile.nu <= profile.nu0
    summary = profile.summary()
    assert summary["K"] == profile.K
    assert "q_error" in summary
