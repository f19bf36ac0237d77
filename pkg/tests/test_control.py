import numpy as np
import pytest

from app.control.pieces import assemble_Xi, lift_vorticity_control, mhd_residual
from app.control.return_method import ReturnMethodConfig, run_return_method, tube_weight
from app.control.splitting import (
    compare_eta_hat,
    eta_hat,
    frozen_in_residual,
    partition,
    partition_gradient,
    split_field,
)
from app.control.tolerances import discretization_tolerance, residual_tolerance
from app.control.vorticity import CrossingCover, build_crossing_cover, label_weights, vorticity_control
from app.errors import (
    BoundaryConstantError,
    CohomologyViolationError,
    FlushingViolationError,
    FrozenInViolationError,
    LadderViolationError,
    ResidualExcessError,
)
from app.fields.base import ScalarField, StreamFunction, VectorField
from app.geometry.grid import build_annulus_grid, wrap_angle
from app.geometry.layout import build_control_layout
from app.profile.flushing import flushing_base_field
from app.scenario.catalog import catalog_field
from app.scenario.config import FieldSpec
from app.transport.flow import SeparableDrift, sample_times, zero_drift

from conftest import HALFWIDTH, OMEGA, SIGMA

TURN = 2.0 * np.pi


def rotation(grid, speed):
    return SeparableDrift(VectorField(grid, -grid.Y, grid.X), lambda t: speed, 0.005)


def rotation_series(grid, speed, times):
    n = len(times)
    return VectorField(
        grid,
        np.broadcast_to(-speed * grid.Y, (n,) + grid.shape).copy(),
        np.broadcast_to(speed * grid.X, (n,) + grid.shape).copy(),
        times,
    )


def vanishing_wave(grid, mode=1, shift=0.0):
    return (grid.R - grid.r_inner) * (grid.r_outer - grid.R) * np.sin(mode * (grid.TH - shift))


# vorticity control


def test_blend_prefers_late_first_crossings():
    cover = CrossingCover(np.array([0.0, 0.5, np.nan]), np.array([0.4, 0.9, np.nan]), 0.1, 0.1, 11)
    np.testing.assert_array_equal(cover.blend(), [0.0, 1.0, 1.0])


def test_crossing_cover_under_rotation(grid, layout):
    times = np.linspace(0.0, 1.0, 41)
    cover = build_crossing_cover(rotation(grid, 2 * TURN), layout, times, 0.05, 0.05)
    # two turns: every node crosses the cut within the first half
    assert np.nanmax(cover.first) <= 0.5 + 1e-9
    both = np.isfinite(cover.second)
    np.testing.assert_allclose((cover.second - cover.first)[both], 0.5, atol=0.03)
    assert cover.n_bins in (21, 22)


def test_cover_without_crossings_fails(grid, layout):
    times = np.linspace(0.0, 1.0, 11)
    with pytest.raises(FlushingViolationError):
        build_crossing_cover(zero_drift(grid, 0.01), layout, times, 0.05, 0.05)


def test_label_weights_switch_off(grid, layout):
    times = np.linspace(0.0, 1.0, 41)
    cover = build_crossing_cover(rotation(grid, 2 * TURN), layout, times, 0.05, 0.05)
    np.testing.assert_allclose(label_weights(cover, 0.0), 1.0, rtol=1e-14)
    np.testing.assert_array_equal(label_weights(cover, 1.0), 0.0)
    assert np.all(label_weights(cover, 0.0, derivative=True) == 0.0)


def test_vorticity_control_reaches_zero(grid, layout):
    times = np.linspace(0.0, 1.0, 41)
    w0 = ScalarField(grid, vanishing_wave(grid))
    result = vorticity_control(rotation(grid, 2 * TURN), w0, layout, times, 0.05, 0.05)
    w, f = result["w"].values, result["f"].values
    np.testing.assert_allclose(w[0], w0.values, rtol=1e-14, atol=1e-16)
    np.testing.assert_array_equal(w[-1], 0.0)
    # the control acts only on trajectories close to the cut
    far = np.abs(wrap_angle(grid.TH - SIGMA)) > 2.2
    assert np.all(f[:, far] == 0.0)
    assert np.max(np.abs(f)) > 0.0


def test_vorticity_control_of_zero_data(grid, layout):
    times = np.linspace(0.0, 1.0, 5)
    result = vorticity_control(rotation(grid, TURN), ScalarField.zeros(grid), layout, times, 0.05, 0.05)
    assert result["cover"] is None
    assert not np.any(result["w"].values) and not np.any(result["f"].values)


# pieces


def test_unknown_lift(grid, layout):
    with pytest.raises(ValueError):
        lift_vorticity_control(ScalarField.zeros(grid), layout, "bogus")


def test_assemble_Xi_of_rest_state(grid, layout, basis):
    times = np.linspace(0.0, 0.1, 5)
    zero = VectorField.zeros(grid, times)
    pieces = assemble_Xi(zero, zero, ScalarField.zeros(grid, times), layout, basis)
    assert pieces.Xi.sup() == 0.0
    assert pieces.P.sup() == 0.0
    assert pieces.diagnostics["rho_max"] == 0.0
    assert pieces.diagnostics["momentum_residual_relative"] == 0.0


def test_assemble_Xi_recovers_flushing_control(profile, layout, basis):
    times = np.linspace(0.0, profile.period, 33)
    y = profile.velocity_series(times)
    zero = VectorField.zeros(profile.grid, times)
    pieces = assemble_Xi(y, zero, ScalarField.zeros(profile.grid, times), layout, basis)
    assert pieces.diagnostics["xi_leak_relative"] <= 1e-8
    assert pieces.diagnostics["R_outside_omega"] <= 1e-8 * pieces.Xi.sup()
    middle = 8
    expected = profile.xi_star(times[middle])
    error = (pieces.Xi.at(middle) - expected).sup()
    assert error <= 0.15 * expected.sup()


def test_assemble_Xi_residual_guard(profile, layout, basis):
    times = np.linspace(0.0, profile.period, 9)
    y = profile.velocity_series(times)
    zero = VectorField.zeros(profile.grid, times)
    with pytest.raises(ResidualExcessError):
        assemble_Xi(y, zero, ScalarField.zeros(profile.grid, times), layout, basis, residual_rel_tol=1e-30)


def test_mhd_residual_without_magnetic_field(profile):
    times = np.linspace(0.0, profile.period, 9)
    series = profile.series(times)
    zero = VectorField.zeros(profile.grid, times)
    report = mhd_residual(series["y"], zero, series["p"], series["xi"], zero)
    assert report["momentum"].shape == (9,)
    np.testing.assert_array_equal(report["induction"], 0.0)
    np.testing.assert_array_equal(report["induction_relative"], 0.0)


# splitting


def test_partition_of_unity(layout):
    np.testing.assert_allclose(partition(layout, 1) + partition(layout, 2), 1.0, atol=1e-15)
    g1, g2 = partition_gradient(layout, 1), partition_gradient(layout, 2)
    np.testing.assert_array_equal(g1[0], -g2[0])
    with pytest.raises(ValueError):
        partition(layout, 3)
    with pytest.raises(ValueError):
        partition_gradient(layout, 0)


def test_split_field_supports(grid, layout):
    psi = StreamFunction(ScalarField(grid, vanishing_wave(grid)))
    H1, H2 = split_field(psi, layout)
    near_cut = layout.lambda_neighbourhood(0.5 * layout.d_lambda)
    assert np.all(H2.magnitude()[near_cut] == 0.0)
    assert np.all(H1.magnitude()[~layout.omega_mask] == 0.0)
    assert H1.sup() > 0.0 and H2.sup() > 0.0


def test_split_field_needs_zero_boundary(grid, layout):
    psi = StreamFunction(ScalarField(grid, np.ones(grid.shape)))
    with pytest.raises(BoundaryConstantError):
        split_field(psi, layout)


def test_eta_hat_for_rigid_rotation(grid, layout):
    times = np.linspace(0.0, 0.2, 21)
    speed = 1.0
    values = np.stack([vanishing_wave(grid, 1, speed * t) for t in times])
    psi = StreamFunction(ScalarField(grid, values, times))
    V = rotation_series(grid, speed, times)
    assert frozen_in_residual(psi, V) < 0.05
    report = compare_eta_hat(psi, V, layout)
    assert report["cancellation"] == 0.0
    assert report["scale"] > 0.0
    assert np.isfinite(report["mismatch_relative"])


def test_eta_hat_rejects_static_stream_in_moving_flow(grid, layout):
    times = np.linspace(0.0, 0.2, 5)
    values = np.stack([vanishing_wave(grid) for _ in times])
    psi = StreamFunction(ScalarField(grid, values, times))
    V = rotation_series(grid, 1.0, times)
    with pytest.raises(FrozenInViolationError):
        eta_hat(psi, V, layout, 1, tolerance=0.5)
    zero = VectorField.zeros(grid, times)
    assert eta_hat(psi, zero, layout, 2).sup() == 0.0


# residual gates


def test_residual_tolerance_follows_discretization(grid):
    times = np.linspace(0.0, 0.1, 11)
    fine = build_annulus_grid(grid.r_inner, grid.r_outer, 24, 192)
    expected = 100.0 * (fine.spacing**2 + 0.01**2)
    assert discretization_tolerance(fine, times) == pytest.approx(fine.spacing**2 + 0.01**2)
    assert residual_tolerance(fine, times) == pytest.approx(expected)
    assert expected < 0.5
    assert discretization_tolerance(fine, times) < discretization_tolerance(grid, times)
    assert residual_tolerance(grid, times) == 1.0
    assert residual_tolerance(grid, times, 1e-3) == 1e-3


def test_derived_frozen_in_gate_rejects_static_stream():
    fine = build_annulus_grid(1.0, 1.5, 24, 192)
    layout = build_control_layout(fine, OMEGA, SIGMA, HALFWIDTH)
    times = np.linspace(0.0, 0.2, 21)
    values = np.stack([vanishing_wave(fine) for _ in times])
    psi = StreamFunction(ScalarField(fine, values, times))
    V = rotation_series(fine, 1.0, times)
    assert frozen_in_residual(psi, V) == pytest.approx(1.0)
    with pytest.raises(FrozenInViolationError):
        eta_hat(psi, V, layout, 1)


# return method


def test_tube_weight_decreases():
    t = np.linspace(0.0, 2.0, 9)
    w = tube_weight(t, 4)
    assert w[0] == pytest.approx(16.0)
    assert np.all(np.diff(w) < 0.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"mode": "bogus"},
        {"k": 0},
        {"max_iters": 0},
        {"horizon": 0.0},
        {"samples_per_period": 1},
        {"delta_ladder": (2.0, 1.0)},
        {"delta_ladder": (0.0, 1.0)},
    ],
)
def test_return_method_config_validation(kwargs):
    with pytest.raises(ValueError):
        ReturnMethodConfig(**kwargs)


def test_return_method_rejects_harmonic_magnetic_field(profile, grid, sine_u):
    H0 = flushing_base_field(grid) * 1e-3
    with pytest.raises(CohomologyViolationError):
        run_return_method(sine_u, H0, profile)


def test_return_method_ladder_and_mode_guards(profile, sine_u, sine_B):
    strict = ReturnMethodConfig(delta_ladder=(1e-9,), enforce_ladder=True, horizon=profile.period)
    with pytest.raises(LadderViolationError):
        run_return_method(sine_u, sine_B, profile, strict)
    with pytest.raises(ValueError):
        run_return_method(sine_u, sine_B, profile, ReturnMethodConfig(mode="euler-null"))


def test_return_method_mhd_short_horizon(profile, basis, sine_u, sine_B):
    cfg = ReturnMethodConfig(mode="mhd", max_iters=2, horizon=profile.period)
    result = run_return_method(sine_u, sine_B, profile, cfg, basis)
    np.testing.assert_allclose(result.times, sample_times(0.0, profile.period, profile.K, profile.samples_per_period))
    assert len(result.log) in (1, 2)
    assert {"iteration", "y_norm_difference", "tube_margin", "delta_star"} <= set(result.log.columns)
    np.testing.assert_allclose(result.V.at(0).x, sine_u.x, atol=0.05 * sine_u.sup())
    np.testing.assert_allclose(result.H.at(0).y, sine_B.y, atol=0.05 * sine_B.sup())
    assert result.magnetic_stream.values.shape == (len(result.times),) + profile.grid.shape
    assert result.annihilation == {}
    assert not np.any(result.f.values)


def test_euler_null_from_rest_follows_profile(profile, basis):
    zero = VectorField.zeros(profile.grid)
    cfg = ReturnMethodConfig(mode="euler-null", max_iters=3)
    result = run_return_method(zero, zero, profile, cfg, basis)
    assert result.annihilation["passed"]
    assert not np.any(result.w.values)
    assert result.H.sup() == 0.0


def test_euler_null_control_drives_velocity_to_rest(profile, basis):
    V0 = catalog_field(FieldSpec(kind="sine_stream", amplitude=1e-3, mode=1), profile.grid)
    zero = VectorField.zeros(profile.grid)
    result = run_return_method(V0, zero, profile, ReturnMethodConfig(mode="euler-null", max_iters=4), basis)
    assert result.annihilation["final_sup"] <= 1e-2 * V0.sup()
    assert result.annihilation["passed"]
    late = result.log[result.log["iteration"] > 2]["ratio"].dropna()
    assert (late < 0.9).all()
    assert result.H.sup() == 0.0
