import numpy as np
import pytest

from app.errors import InvalidGeometryError, LayoutInfeasibleError
from app.geometry.grid import build_annulus_grid, chord, wrap_angle
from app.geometry.layout import build_control_layout, verify_layout
from app.geometry.profiles import PeriodicProfile, smooth_bump, smooth_step

from conftest import HALFWIDTH, OMEGA, R_INNER, SIGMA


@pytest.mark.parametrize(
    "r1, r2, nr, nt",
    [(1.5, 1.0, 12, 32), (0.0, 1.0, 12, 32), (1.0, 1.5, 4, 32), (1.0, 1.5, 12, 31), (1.0, 1.5, 12, 8)],
)
def test_invalid_grids_are_rejected(r1, r2, nr, nt):
    with pytest.raises(InvalidGeometryError):
        build_annulus_grid(r1, r2, nr, nt)


def test_grid_shape_and_quadrature(grid):
    assert grid.R.shape == (12, 32)
    assert grid.r[0] == 1.0 and grid.r[-1] == 1.5
    # Trapezoid weights integrate r dr exactly
    assert grid.area == pytest.approx(np.pi * (1.5**2 - 1.0**2), rel=1e-12)
    assert grid.spacing == pytest.approx(np.hypot(0.5 / 11, 1.5 * 2 * np.pi / 32))


def test_polar_recovers_nodes(grid):
    r, theta = grid.polar(grid.X, grid.Y)
    np.testing.assert_allclose(r, grid.R, atol=1e-14)
    np.testing.assert_allclose(theta, grid.TH, atol=1e-12)


def test_scaled_grid_refines_both_directions(grid):
    finer = grid.scaled(2)
    assert finer.n_radial == 23 and finer.n_angular == 64
    np.testing.assert_allclose(finer.r[::2], grid.r)


def test_wrap_angle_range():
    angles = np.linspace(-10.0, 10.0, 101)
    wrapped = wrap_angle(angles)
    assert np.all(wrapped > -np.pi) and np.all(wrapped <= np.pi)
    np.testing.assert_allclose(np.cos(wrapped), np.cos(angles), atol=1e-12)


def test_layout_distance_to_lambda(layout):
    # Nearest points of the cut and the Lambda sides sit on the inner circle
    assert layout.d_lambda == pytest.approx(chord(R_INNER, HALFWIDTH), abs=1e-4)
    assert layout.sigma_angle == pytest.approx(SIGMA)
    assert not layout.failures


def test_layout_verification_passes(layout):
    report = verify_layout(layout)
    assert report["passed"], report["checks"]
    assert report["partition_residual"] <= 1e-14


def test_partition_supports(layout):
    delta = np.abs(layout.offset(layout.grid.TH))
    assert np.all(layout.mu1[delta <= HALFWIDTH] == 1.0)
    assert np.all(layout.mu2[delta <= HALFWIDTH] == 0.0)
    assert np.all(layout.mu1[~layout.omega_mask] == 0.0)
    assert np.all(layout.chi_hat[~layout.omega_mask] == 1.0)


def test_narrow_omega_is_infeasible(grid):
    omega = (SIGMA - 0.6, SIGMA + 0.6)
    with pytest.raises(LayoutInfeasibleError):
        build_control_layout(grid, omega, SIGMA, HALFWIDTH)
    relaxed = build_control_layout(grid, omega, SIGMA, HALFWIDTH, strict=False, estimate_c_star=False)
    assert "lambda_to_outside_omega" in relaxed.failures


def test_lambda_wider_than_half_pi_is_rejected(grid):
    with pytest.raises(LayoutInfeasibleError):
        build_control_layout(grid, OMEGA, SIGMA, 2.0)


def test_bump_has_requested_area():
    bump = smooth_bump(0.2, 0.7, area=3.0)
    assert bump.integral() == pytest.approx(3.0, rel=1e-10)
    assert bump(0.2) == 0.0 and bump(0.7) == 0.0 and bump(1.0) == 0.0
    assert bump(0.45) > 0.0


def test_step_is_exact_outside_transition():
    step = smooth_step(1.0, 2.0)
    assert step(0.5) == 0.0 and step(2.5) == 1.0
    values = step(np.linspace(1.0, 2.0, 51))
    assert np.all(np.diff(values) >= 0.0)
    down = smooth_step(1.0, 2.0, descending=True)
    assert down(0.5) == 1.0 and down(2.5) == 0.0
    assert down.derivative(0.5) == 0.0


def test_step_derivative_matches_difference_quotient():
    step = smooth_step(0.0, 1.0)
    t, h = 0.4, 1e-6
    assert step.derivative(t) == pytest.approx((step(t + h) - step(t - h)) / (2 * h), rel=1e-6)


def test_periodic_profile_repeats():
    lam = PeriodicProfile(smooth_bump(0.0, 0.75, area=1.0), period=1.0)
    assert lam(0.3) == pytest.approx(lam(2.3))
    assert lam(0.9) == 0.0
    assert lam.sup() > 0.0


def test_invalid_profile_interval():
    with pytest.raises(ValueError):
        smooth_bump(1.0, 1.0, area=1.0)
    with pytest.raises(ValueError):
        smooth_step(0.0, 1.0).integral()
