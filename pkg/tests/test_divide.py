import numpy as np
import pytest

from app.control.divide import (
    DivideConfig,
    ZeroRegionTracker,
    annihilation_threshold,
    run_divide_and_control,
    verify_annihilation,
)
from app.control.return_method import ReturnMethodConfig
from app.control.subinterval import ALGORITHMS, CutoffSplitting, RegularityCorrector, SubintervalInputs
from app.control.tolerances import residual_tolerance
from app.fields.base import ScalarField, VectorField
from app.fields.operators import grad_perp
from app.scenario.catalog import catalog_field, catalog_stream
from app.scenario.config import FieldSpec
from app.transport.flow import SampledDrift, sample_times
from app.transport.advection import advect_stream_frozen
from app.transport.support import SupportRegion

from conftest import SIGMA


def subinterval_inputs(profile, basis, spec):
    """Frozen-in stream of a catalog field carried by y* over one period, with the flushing pressure and control"""
    grid = profile.grid
    times = sample_times(0.0, profile.period, profile.K, 16)
    series = profile.series(times)
    V = series["y"]
    psi = advect_stream_frozen(SampledDrift(V, profile.rk_substeps), catalog_stream(spec, grid), times)
    H = grad_perp(psi.psi, "local")
    return SubintervalInputs(V, H, psi, series["p"], series["xi"], profile, basis)


@pytest.fixture
def sine_inputs(profile, basis):
    return subinterval_inputs(profile, basis, FieldSpec(kind="sine_stream", amplitude=1e-3, mode=1))


@pytest.fixture
def narrow_inputs(profile, basis):
    spec = FieldSpec(kind="sector_bump", amplitude=1e-3, center_angle=SIGMA, width=1.2)
    return subinterval_inputs(profile, basis, spec)


def test_registry():
    assert ALGORITHMS["v1"] is CutoffSplitting
    assert ALGORITHMS["v2"] is RegularityCorrector


@pytest.mark.parametrize(
    "kwargs", [{"version": "v3"}, {"subinterval_samples": 4}, {"max_steps": -1}]
)
def test_divide_config_validation(kwargs):
    with pytest.raises(ValueError):
        DivideConfig(**kwargs)


def test_annihilation_threshold(grid):
    threshold = annihilation_threshold(2.0, grid, 1e-6, 5.0)
    assert threshold == pytest.approx(2.0 * (1e-6 + 5.0 * grid.spacing**2))


def test_verify_annihilation_of_zero_field(layout, grid):
    report = verify_annihilation(VectorField.zeros(grid), layout, 1e-9)
    assert report["passed"]
    assert report["measured"] == 0.0
    assert report["margin"] == pytest.approx(1e-9)


def test_cutoff_splitting_cleans_the_cut(sine_inputs, layout):
    solution = CutoffSplitting().run(sine_inputs)
    d = solution.diagnostics
    assert d["version"] == 1
    assert d["residual_tolerance"] == pytest.approx(residual_tolerance(layout.grid, sine_inputs.times))
    assert max(d["momentum_residual"], d["induction_residual"]) <= d["residual_tolerance"] <= 1.0
    assert d["eta_outside_omega"] == 0.0
    assert d["eta_before_window"] == 0.0
    assert d["phi_on_circles"] == 0.0
    assert d["eta_potential_mismatch"] <= 1e-10 * max(solution.eta.sup(), 1e-300)
    B_end = grad_perp(ScalarField(layout.grid, solution.psi_end), "local")
    near_cut = layout.lambda_neighbourhood(0.5 * layout.d_lambda)
    assert np.all(B_end.magnitude()[near_cut] == 0.0)
    assert B_end.sup() > 0.0
    # B follows H until the cutoff window opens
    np.testing.assert_allclose(solution.B.at(0).x, sine_inputs.H.at(0).x, rtol=1e-12, atol=1e-15)


def test_shifted_solution_moves_times(sine_inputs):
    solution = CutoffSplitting().run(sine_inputs)
    moved = solution.shifted(0.5)
    np.testing.assert_allclose(moved.times, solution.times + 0.5)
    np.testing.assert_array_equal(moved.B.x, solution.B.x)
    assert moved.diagnostics == solution.diagnostics


def test_regularity_corrector_deletes_field_near_cut(narrow_inputs):
    solution = RegularityCorrector().run(narrow_inputs)
    d = solution.diagnostics
    assert d["version"] == 2
    assert d["residual_tolerance"] == pytest.approx(residual_tolerance(narrow_inputs.V.grid, narrow_inputs.times))
    assert max(d["momentum_residual"], d["induction_residual"]) <= d["residual_tolerance"]
    # the bump lies where mu2 vanishes: nothing survives the window
    assert d["overlap_fraction"] == 0.0
    assert not np.any(solution.psi_end)
    assert d["split_mismatch"] <= 1e-12 * narrow_inputs.psi.psi.sup()
    assert d["phi_on_circles"] == 0.0


def test_distance_cutoff(profile, narrow_inputs):
    grid = profile.grid
    algorithm = RegularityCorrector()
    assert not np.any(algorithm.distance_cutoff(SupportRegion.empty(grid), narrow_inputs))
    mask = np.zeros(grid.shape, dtype=bool)
    mask[grid.n_radial // 2, grid.n_angular // 2] = True
    chi = algorithm.distance_cutoff(SupportRegion(grid, mask), narrow_inputs)
    assert chi[mask][0] == 1.0
    assert np.all((chi >= 0.0) & (chi <= 1.0))
    far = np.hypot(grid.X - grid.X[mask][0], grid.Y - grid.Y[mask][0]) > 2.0 * max(profile.nu0, 2.0 * grid.spacing)
    assert np.all(chi[far] == 0.0)


def test_overlap_region_needs_both_parts(narrow_inputs):
    grid = narrow_inputs.V.grid
    n = len(narrow_inputs.times)
    ones = np.ones((n,) + grid.shape)
    algorithm = RegularityCorrector()
    half = ones.copy()
    half[..., : grid.n_angular // 2] = 0.0
    region = algorithm.overlap_region(ones, half, narrow_inputs)
    np.testing.assert_array_equal(region.mask, half[-1] > 0.0)
    assert algorithm.overlap_region(ones, 0.0 * ones, narrow_inputs).is_empty


def test_zero_region_tracker_grows(layout, grid):
    spec = FieldSpec(kind="sector_bump", amplitude=1.0, center_angle=SIGMA, width=0.3)
    B0 = catalog_field(spec, grid)
    tracker = ZeroRegionTracker(B0, layout, float("nan"))
    start = tracker.history[0]
    times = np.linspace(0.0, 0.01, 3)
    region = tracker.advance(VectorField.zeros(grid, times), 2)
    assert len(tracker.history) == 2
    assert tracker.history[-1] >= start
    near_cut = layout.lambda_neighbourhood(0.5 * layout.d_lambda)
    assert np.all(region.mask[near_cut])


def _quick(**kwargs):
    return DivideConfig(
        subinterval_samples=8,
        mhd=ReturnMethodConfig(mode="mhd", max_iters=2),
        euler=ReturnMethodConfig(mode="euler-null", max_iters=2),
        **kwargs,
    )


def test_divide_without_magnetic_field(profile, basis, grid):
    zero = VectorField.zeros(grid)
    result = run_divide_and_control(zero, zero, profile, _quick(euler_phase=False), basis)
    assert result.annihilation["complete"]
    assert result.annihilation["passed"]
    assert result.annihilation["zero_fraction"] == 1.0
    assert result.log.empty
    assert result.euler is None
    assert result.solution.times[0] == 0.0
    assert result.solution.times[-1] == pytest.approx(1.0)


def test_divide_first_subinterval_v1(profile, basis, sine_u, sine_B, layout):
    result = run_divide_and_control(sine_u, sine_B, profile, _quick(max_steps=1), basis)
    assert len(result.log) == 1
    row = result.log.iloc[0]
    assert row["step"] == 0
    assert row["t1"] == pytest.approx(profile.period)
    assert row["annihilation_passed"]
    assert row["lambda_clean_sup"] == 0.0
    assert row["eta_outside_omega"] == 0.0
    assert row["eta_before_window"] == 0.0
    assert row["phi_on_circles"] == 0.0
    assert np.isnan(row["ladder_margin"])
    # an incomplete run stops before the Euler phase
    assert not result.annihilation["complete"]
    assert result.euler is None
    assert len(result.subintervals) == 1
    assert len(result.zero_fractions) == 2
    assert result.solution.metadata["steps"] == 1


def test_divide_all_steps_annihilates_bump(profile, basis, sine_u):
    spec = FieldSpec(kind="sector_bump", amplitude=1e-3, center_angle=SIGMA, width=1.2)
    B0 = catalog_field(spec, profile.grid)
    result = run_divide_and_control(sine_u, B0, profile, _quick(version="v2", euler_phase=False), basis)
    annihilation = result.annihilation
    assert len(result.log) == profile.K
    assert annihilation["complete"]
    assert annihilation["passed"]
    assert annihilation["final_sup"] <= annihilation["threshold"]
    assert result.solution.times[-1] == pytest.approx(1.0)
    assert result.solution.B.at(-1).sup() <= annihilation["threshold"]
    assert result.log["annihilation_passed"].all()


def test_version2_without_corrector_matches_version1(sine_inputs):
    v1 = CutoffSplitting().run(sine_inputs)
    algorithm = RegularityCorrector(corrector=False)
    v2 = algorithm.run(sine_inputs)
    assert v2.diagnostics["corrector_sup"] == 0.0
    assert v2.diagnostics["corrector_core_mismatch"] == 0.0
    np.testing.assert_allclose(v2.times, v1.times)
    # with sigma = 0 the field is the cutoff combination of the frozen-in split
    beta = algorithm.cutoffs(sine_inputs.profile, sine_inputs.times)["beta"]
    cut = v2.H1 * beta + v2.H2
    scale = sine_inputs.H.sup()
    np.testing.assert_allclose(v2.B.x, cut.x, atol=1e-12 * scale)
    np.testing.assert_allclose(v2.B.y, cut.y, atol=1e-12 * scale)
    # both versions start from the same split of H
    np.testing.assert_allclose(v2.B.at(0).x, v1.B.at(0).x, atol=1e-12 * scale)
    np.testing.assert_allclose(v2.B.at(0).y, v1.B.at(0).y, atol=1e-12 * scale)
    for solution in (v1, v2):
        d = solution.diagnostics
        assert max(d["momentum_residual"], d["induction_residual"]) <= d["residual_tolerance"]
        assert d["phi_on_circles"] == 0.0
