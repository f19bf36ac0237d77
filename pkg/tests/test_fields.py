import numpy as np
import pytest
import sympy as sp

from app.control.elsasser import elsasser_convert, elsasser_inverse, gpm_source
from app.errors import BoundaryConstantError, GridMismatchError, IncompatibleDataError
from app.fields.base import ScalarField, StreamFunction, VectorField
from app.fields.cohomology import cohomology_basis, div_curl_reconstruct
from app.fields.norms import holder_norm, inner_product_l2, l2_norm, pairing_l2
from app.fields.operators import curl2, d_theta, divergence, grad_perp, gradient, laplacian
from app.fields.poisson import discrete_laplacian, poisson_dirichlet, poisson_neumann
from app.geometry.grid import build_annulus_grid
from app.scenario.catalog import catalog_field, catalog_stream
from app.scenario.config import FieldSpec


def _sympy_on_grid(expr, grid):
    x, y = sp.symbols("x y")
    return sp.lambdify((x, y), expr, "numpy")(grid.X, grid.Y) * np.ones(grid.shape)


def test_angular_derivative_is_spectrally_exact(grid):
    values = np.sin(3 * grid.TH) * grid.R
    np.testing.assert_allclose(d_theta(values, grid), 3 * np.cos(3 * grid.TH) * grid.R, atol=1e-12)
    np.testing.assert_allclose(d_theta(values, grid, order=2), -9 * values, atol=1e-11)


def test_local_stencil_keeps_zero_regions(grid):
    values = np.zeros(grid.shape)
    values[:, 10:14] = 1.0
    derivative = d_theta(values, grid, stencil="local")
    assert np.all(derivative[:, 16:] == 0.0)
    assert np.all(derivative[:, :8] == 0.0)


def test_quadratic_gradients_match_sympy(grid):
    # Cartesian quadratics are quadratic in r along rays and trigonometric of degree two in theta,
    # so both the radial differences and the angular collocation are exact
    x, y = sp.symbols("x y")
    f = x * y - 2 * x**2 + 3 * y
    F = ScalarField(grid, _sympy_on_grid(f, grid))
    g = gradient(F)
    np.testing.assert_allclose(g.x, _sympy_on_grid(sp.diff(f, x), grid), atol=1e-10)
    np.testing.assert_allclose(g.y, _sympy_on_grid(sp.diff(f, y), grid), atol=1e-10)
    perp = grad_perp(F)
    np.testing.assert_allclose(perp.x, g.y, atol=1e-14)
    np.testing.assert_allclose(perp.y, -g.x, atol=1e-14)


def test_gpm_source_matches_sympy(grid):
    x, y = sp.symbols("x y")
    zp = (x * y, x - y**2)
    zm = (y**2 + x, 2 * x - x * y)

    def oracle(drift, carried):
        # -sum_l grad(drift_l) ^ d_l(carried)
        total = 0
        for l, var in enumerate((x, y)):
            ga = (sp.diff(drift[l], x), sp.diff(drift[l], y))
            db = (sp.diff(carried[0], var), sp.diff(carried[1], var))
            total += ga[0] * db[1] - ga[1] * db[0]
        return -total

    Zp = VectorField(grid, _sympy_on_grid(zp[0], grid), _sympy_on_grid(zp[1], grid))
    Zm = VectorField(grid, _sympy_on_grid(zm[0], grid), _sympy_on_grid(zm[1], grid))
    g_plus, g_minus = gpm_source(Zp, Zm)
    np.testing.assert_allclose(g_plus.values, _sympy_on_grid(oracle(zm, zp), grid), atol=1e-9)
    np.testing.assert_allclose(g_minus.values, _sympy_on_grid(oracle(zp, zm), grid), atol=1e-9)


def test_gpm_source_of_equal_pair_is_minus_curl_times_divergence(grid):
    z = VectorField(grid, grid.X * grid.Y + grid.Y, grid.X**2 - 0.5 * grid.Y)
    g_plus, g_minus = gpm_source(z, z)
    expected = -curl2(z).values * divergence(z).values
    np.testing.assert_allclose(g_plus.values, expected, atol=1e-11)
    np.testing.assert_allclose(g_minus.values, expected, atol=1e-11)


def test_elsasser_round_trip(grid, sine_u, sine_B):
    pair = elsasser_convert(sine_u, sine_B)
    V, H = elsasser_inverse(pair)
    np.testing.assert_allclose(V.x, sine_u.x, atol=1e-18)
    np.testing.assert_allclose(H.y, sine_B.y, atol=1e-18)


def test_grid_mismatch_is_rejected(grid, fine_grid):
    with pytest.raises(GridMismatchError):
        VectorField.zeros(grid) + VectorField.zeros(fine_grid)


def test_catalog_fields_are_tangential(grid):
    for spec in (
        FieldSpec(kind="sine_stream", amplitude=1.0, mode=2),
        FieldSpec(kind="sector_bump", amplitude=1.0, width=0.8),
        FieldSpec(kind="rotated_gaussian", amplitude=1.0, rotation=0.3),
    ):
        assert catalog_field(spec, grid).normal_defect() <= 1e-14


def test_catalog_field_matches_numerical_perp(fine_grid):
    spec = FieldSpec(kind="sine_stream", amplitude=1.0, mode=2)
    exact = catalog_field(spec, fine_grid)
    numeric = grad_perp(catalog_stream(spec, fine_grid).psi)
    assert (numeric - exact).sup() <= 1e-8 * max(exact.sup(), 1.0) + 1e-6


def test_dirichlet_inverts_solver_stencil(grid):
    psi = catalog_stream(FieldSpec(kind="sine_stream", amplitude=1.0, mode=3), grid).psi
    rhs = discrete_laplacian(psi) * -1.0
    solved = poisson_dirichlet(rhs)
    np.testing.assert_allclose(solved.values, psi.values, atol=1e-12)


def test_dirichlet_harmonic_profile(grid):
    solved = poisson_dirichlet(ScalarField.zeros(grid), 0.0, 2.0)
    exact = 2.0 * np.log(grid.R / grid.r_inner) / grid.log_ratio
    np.testing.assert_allclose(solved.values, exact, atol=1e-3)
    assert np.all(solved.values[0] == 0.0) and np.all(solved.values[-1] == 2.0)


def test_dirichlet_converges_on_smooth_data(fine_grid):
    g = fine_grid
    s = (g.R - g.r_inner) / (g.r_outer - g.r_inner)
    k = np.pi / (g.r_outer - g.r_inner)
    psi = np.sin(np.pi * s) * np.cos(2 * g.TH)
    psi_r = k * np.cos(np.pi * s) * np.cos(2 * g.TH)
    psi_rr = -(k**2) * psi
    rhs = -(psi_rr + psi_r / g.R - 4 * psi / g.R**2)
    solved = poisson_dirichlet(ScalarField(g, rhs))
    assert np.max(np.abs(solved.values - psi)) <= 1e-2


def test_dirichlet_batches_over_time(grid):
    rhs = np.stack([np.ones(grid.shape), 2.0 * np.ones(grid.shape)])
    solved = poisson_dirichlet(ScalarField(grid, rhs, np.array([0.0, 1.0])))
    np.testing.assert_allclose(solved.values[1], 2.0 * solved.values[0], atol=1e-14)


def test_neumann_recovers_zero_flux_profile():
    g = build_annulus_grid(1.0, 1.5, 81, 32)
    q = (g.R - 1.0) ** 2 * (g.R - 1.5) ** 2
    q_r = 2 * (g.R - 1.0) * (g.R - 1.5) ** 2 + 2 * (g.R - 1.0) ** 2 * (g.R - 1.5)
    q_rr = 2 * (g.R - 1.5) ** 2 + 8 * (g.R - 1.0) * (g.R - 1.5) + 2 * (g.R - 1.0) ** 2
    P = q * np.cos(g.TH)
    rhs = (q_rr + q_r / g.R - q / g.R**2) * np.cos(g.TH)
    solved = poisson_neumann(ScalarField(g, rhs))
    assert np.max(np.abs(solved.values - P)) <= 5e-2 * np.max(np.abs(P))


def test_neumann_rejects_incompatible_data(grid):
    with pytest.raises(IncompatibleDataError):
        poisson_neumann(ScalarField(grid, np.ones(grid.shape)))


def test_neumann_solution_has_zero_mean(grid):
    rhs = np.cos(grid.TH) * grid.R
    solved = poisson_neumann(ScalarField(grid, rhs))
    mean = np.sum(solved.values * grid.area_weights) / grid.area
    assert abs(mean) <= 1e-12


def test_laplacian_of_harmonic_is_small(fine_grid):
    harmonic = ScalarField(fine_grid, np.log(fine_grid.R))
    assert np.max(np.abs(laplacian(harmonic).values[2:-2])) <= 1e-3


def test_cohomology_normalization(grid, basis):
    assert pairing_l2(basis.q, basis.q) == pytest.approx(1.0, rel=1e-12)
    assert basis.normalization == pytest.approx(1.0 / np.sqrt(2 * np.pi * grid.log_ratio), rel=1e-3)
    assert basis.q.normal_defect() <= 1e-14


def test_sine_streams_have_no_cohomology(grid, basis, sine_B):
    assert abs(basis.project(sine_B)) <= 1e-12


@pytest.mark.parametrize("stencil", ["spectral", "local"])
@pytest.mark.parametrize("shape", [(12, 32), (40, 64)])
def test_streams_vanishing_on_circles_pair_to_roundoff(stencil, shape):
    grid = build_annulus_grid(1.0, 1.5, *shape)
    basis = cohomology_basis(grid)
    s = (grid.R - grid.r_inner) / (grid.r_outer - grid.r_inner)
    psi = ScalarField(grid, s * (1.0 - s) * np.exp(s) * (1.0 + 0.5 * np.sin(grid.TH)))
    assert np.all(psi.values[[0, -1]] == 0.0)
    assert abs(basis.project(grad_perp(psi, stencil))) <= 1e-12


def test_pairing_weights_keep_area(grid):
    exact = np.pi * (grid.r_outer**2 - grid.r_inner**2)
    assert grid.pairing_area_weights.sum() == pytest.approx(exact, rel=1e-12)
    assert grid.pairing_radial_weights.sum() == pytest.approx(grid.r_outer - grid.r_inner, rel=1e-12)


def test_reconstruct_pure_cohomology(grid, basis):
    F = div_curl_reconstruct(ScalarField.zeros(grid), 0.7, basis)
    assert basis.project(F) == pytest.approx(0.7, rel=1e-12)
    np.testing.assert_allclose(F.x, 0.7 * basis.q.x, atol=1e-15)


def test_reconstruct_from_curl(fine_grid):
    basis = cohomology_basis(fine_grid)
    F = catalog_field(FieldSpec(kind="sine_stream", amplitude=1.0, mode=1), fine_grid)
    rebuilt = div_curl_reconstruct(curl2(F), basis.project(F), basis)
    assert (rebuilt - F).sup() <= 2e-2 * F.sup()
    assert basis.project(rebuilt) == pytest.approx(basis.project(F), abs=1e-12)


def test_reconstruct_series_projection(grid, basis):
    times = np.array([0.0, 0.5, 1.0])
    F = div_curl_reconstruct(ScalarField.zeros(grid, times), np.array([0.0, 1.0, 2.0]), basis)
    np.testing.assert_allclose(basis.project(F), [0.0, 1.0, 2.0], atol=1e-12)


def test_stream_function_boundary_checks(grid):
    psi = ScalarField(grid, grid.R - grid.r_inner)
    stream = StreamFunction.from_scalar(psi)
    assert stream.boundary_values == pytest.approx((0.0, 0.5))
    with pytest.raises(BoundaryConstantError):
        stream.require_zero_boundary()
    with pytest.raises(BoundaryConstantError):
        StreamFunction.from_scalar(ScalarField(grid, grid.X))


def test_norms(grid, sine_B):
    assert l2_norm(sine_B) == pytest.approx(np.sqrt(inner_product_l2(sine_B, sine_B)))
    constant = ScalarField(grid, np.full(grid.shape, 3.0))
    assert holder_norm(constant, m=1) == pytest.approx(3.0, abs=1e-9)
    assert holder_norm(sine_B, m=1) >= max(np.max(np.abs(sine_B.x)), np.max(np.abs(sine_B.y)))


@pytest.mark.parametrize("m, alpha", [(3, 0.5), (-1, 0.5), (1, 0.0), (1, 1.0)])
def test_holder_norm_rejects_bad_orders(grid, m, alpha):
    with pytest.raises(ValueError):
        holder_norm(ScalarField.zeros(grid), m=m, alpha=alpha)
