import numpy as np
import pytest

from app.errors import NontangentialDriftError
from app.fields.base import ScalarField, StreamFunction, VectorField
from app.fields.operators import grad_perp
from app.transport.advection import advect_scalar, advect_stream_frozen, induction_evolve
from app.transport.checks import (
    crossing_times,
    gronwall_bound,
    gronwall_check,
    separation_check,
    verify_dragging,
    verify_flushing,
)
from app.transport.flow import (
    SampledDrift,
    SeparableDrift,
    check_tangential,
    drift_deviation,
    integrate_flow,
    sample_times,
    zero_drift,
)
from app.transport.interpolation import PolarInterpolator
from app.transport.support import SupportRegion, boundary_connected, distance_to_mask, pullback

from conftest import SIGMA


def rotation(grid, speed=1.0, time_step=0.01):
    """Rigid rotation with angular speed ``speed`` (counter-clockwise when positive)"""
    return SeparableDrift(VectorField(grid, -grid.Y, grid.X), lambda t: speed, time_step)


def test_sample_times():
    np.testing.assert_allclose(sample_times(0.0, 1.0, 4, 2), np.linspace(0.0, 1.0, 9))
    np.testing.assert_allclose(sample_times(0.25, 0.5, 4, 2), [0.25, 0.375, 0.5])


def test_radial_drift_is_rejected(grid):
    radial = VectorField(grid, grid.X / grid.R, grid.Y / grid.R)
    with pytest.raises(NontangentialDriftError):
        check_tangential(radial)
    with pytest.raises(NontangentialDriftError):
        SeparableDrift(radial, lambda t: 1.0, 0.01)


def test_sampled_drift_needs_times(grid):
    with pytest.raises(ValueError):
        SampledDrift(VectorField.zeros(grid))


def test_sampled_drift_is_linear_in_time(grid):
    base = VectorField(grid, -grid.Y, grid.X)
    series = VectorField(grid, np.stack([0 * base.x, 2 * base.x]), np.stack([0 * base.y, 2 * base.y]), np.array([0.0, 1.0]))
    drift = SampledDrift(series)
    np.testing.assert_allclose(drift.on_grid(0.25).x, 0.5 * base.x, atol=1e-15)
    np.testing.assert_allclose(drift.on_grid(5.0).y, 2 * base.y)


def test_rotation_flow_map(grid):
    flow = integrate_flow(rotation(grid), 0.0, 0.5)
    x, y = flow.end
    c, s = np.cos(0.5), np.sin(0.5)
    np.testing.assert_allclose(x, c * grid.X - s * grid.Y, atol=1e-3)
    np.testing.assert_allclose(y, s * grid.X + c * grid.Y, atol=1e-3)
    assert flow.max_clamp <= 1e-3
    with pytest.raises(KeyError):
        flow.index(0.3)


def test_record_times_must_be_monotone(grid):
    with pytest.raises(ValueError):
        integrate_flow(rotation(grid), 0.0, 1.0, record=[0.5, 0.2, 1.0])


def test_crossing_times_of_clockwise_rotation(grid):
    record = np.linspace(0.0, 7.0, 141)
    flow = integrate_flow(rotation(grid, speed=-1.0, time_step=0.05), 0.0, 7.0, record=record)
    first = crossing_times(flow, SIGMA)[0]
    offset = np.mod(grid.TH - SIGMA, 2 * np.pi)
    check = (offset > 0.1) & (offset < 6.0)
    np.testing.assert_allclose(first[check], offset[check], atol=1e-3)


def test_flushing_verdict(grid, layout):
    record = np.linspace(0.0, 7.0, 141)
    flow = integrate_flow(rotation(grid, time_step=0.05), 0.0, 7.0, record=record)
    report = verify_flushing(flow, layout, window=(0.0, 7.0))
    assert report["passed"]
    assert len(report["table"]) == grid.n_radial * grid.n_angular
    short = verify_flushing(flow, layout, window=(0.0, 1.0))
    assert not short["passed"] and short["failed_nodes"]


def test_dragging_uses_the_widest_chord(grid):
    flow = integrate_flow(rotation(grid), 0.0, 0.1, record=np.linspace(0.0, 0.1, 3))
    report = verify_dragging(flow, [(0.0, 0.1)], bound=0.2)
    assert report["max_displacement"] == pytest.approx(2 * 1.5 * np.sin(0.05), abs=1e-4)
    assert report["passed"] and 0.0 < report["margin"] < 1.0
    assert not verify_dragging(flow, [(0.0, 0.1)], bound=0.1)["passed"]


def test_gronwall_bound_values():
    assert gronwall_bound(0.1, 2.0, 0.5) == pytest.approx(0.05 * np.e)
    assert gronwall_bound(0.1, 2.0, 0.5, integrated_lipschitz=0.0) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        gronwall_bound(-1.0, 1.0, 1.0)


def test_gronwall_check_against_perturbed_rotation(grid):
    reference = rotation(grid)
    perturbed = rotation(grid, speed=1.01)
    deviation = drift_deviation(reference, perturbed, np.array([0.0]))
    table = gronwall_check(reference, perturbed, [(0.0, 0.5), (0.2, 0.4)], deviation, lipschitz=1.0)
    assert bool(table["pass"].all())
    assert (table["measured"] > 0.0).all()


def test_rotation_keeps_pairs_apart(grid):
    flow = integrate_flow(rotation(grid), 0.0, 0.5, record=[0.25, 0.5])
    report = separation_check(flow, [0.25, 0.5], min_initial=0.2, min_final=0.19)
    assert report["passed"] and report["pairs"] > 0


def test_zero_drift_keeps_scalars(grid):
    v0 = ScalarField(grid, np.sin(grid.TH) * grid.R**2)
    result = advect_scalar(zero_drift(grid, 0.1), v0, np.linspace(0.0, 0.3, 4))
    assert result.values.shape == (4,) + grid.shape
    np.testing.assert_allclose(result.values[-1], v0.values, atol=1e-10)


def test_rotated_scalar(grid):
    v0 = ScalarField(grid, grid.X.copy())
    result = advect_scalar(rotation(grid), v0, np.linspace(0.0, 0.5, 11))
    exact = grid.R * np.cos(grid.TH - 0.5)
    assert np.max(np.abs(result.values[-1] - exact)) <= 1e-2 * 1.5


def test_local_transport_keeps_far_nodes_zero(grid):
    values = np.zeros(grid.shape)
    values[:, 0:4] = 1.0
    result = advect_scalar(rotation(grid), ScalarField(grid, values), np.linspace(0.0, 0.15, 4))
    assert np.all(result.values[-1][:, 12:27] == 0.0)
    assert np.any(result.values[-1][:, 0:4] != 0.0)


def test_frozen_stream_keeps_circle_constants(grid):
    psi = ScalarField(grid, (grid.R - grid.r_inner) + 0.1 * np.sin(grid.TH) * (grid.R - 1.0) * (1.5 - grid.R))
    stream = StreamFunction.from_scalar(psi)
    moved = advect_stream_frozen(rotation(grid), stream, np.linspace(0.0, 0.2, 5))
    assert np.all(moved.psi.values[:, 0, :] == 0.0)
    assert np.all(moved.psi.values[:, -1, :] == stream.boundary_values[1])


def test_induction_rotates_vector_fields(grid):
    g = (grid.R - grid.r_inner) * (grid.r_outer - grid.R)
    H0 = grad_perp(ScalarField(grid, g * np.sin(grid.TH)))
    result = induction_evolve(rotation(grid), H0, np.linspace(0.0, 0.3, 7))
    expected = grad_perp(ScalarField(grid, g * np.sin(grid.TH - 0.3)))
    assert (result.at(-1) - expected).sup() <= 5e-2 * H0.sup()


def test_interpolators(grid):
    values = grid.X * grid.Y
    for method in ("local", "spline"):
        interp = PolarInterpolator(grid, values, method)
        np.testing.assert_allclose(interp(grid.X, grid.Y), values, atol=1e-8)
    with pytest.raises(ValueError):
        PolarInterpolator(grid, values, "nearest")


def test_boundary_connected_glues_the_seam():
    mask = np.zeros((12, 32), dtype=bool)
    mask[0:4, 30:32] = True  # touches the inner circle
    mask[2:5, 0:2] = True  # joined to the first across theta = 0
    mask[5:7, 10:13] = True  # interior island
    kept = boundary_connected(mask)
    assert kept[3, 0] and kept[0, 31]
    assert not kept[6, 11]
    assert not np.any(boundary_connected(np.zeros((12, 32), dtype=bool)))


def test_support_regions(grid):
    values = np.zeros(grid.shape)
    values[4:8, 10:14] = 1.0
    values[6, 20] = 1e-12
    region = SupportRegion.from_field(ScalarField(grid, values))
    assert region.mask.sum() == 16
    grown = region.dilate(grid.spacing)
    assert np.all(grown.mask[region.mask]) and grown.mask.sum() > 16
    shrunk = grown.erode(grid.spacing)
    assert np.all(grown.mask[shrunk.mask])
    assert SupportRegion.from_field(ScalarField.zeros(grid)).is_empty
    full = SupportRegion(grid, np.ones(grid.shape, dtype=bool))
    assert full.area_fraction() == pytest.approx(1.0)
    same = pullback(region, grid.X, grid.Y)
    np.testing.assert_array_equal(same.mask, region.mask)
    assert np.all(np.isinf(distance_to_mask(grid, np.zeros(grid.shape, dtype=bool))))


def test_support_image_under_rest(grid):
    values = np.zeros(grid.shape)
    values[3:6, 5:9] = 1.0
    region = SupportRegion.from_field(ScalarField(grid, values))
    flow = integrate_flow(zero_drift(grid, 0.1), 0.0, 0.2)
    moved = region.image(flow, radius=1e-9)
    np.testing.assert_array_equal(moved.mask, region.mask)
