"""Poisson solvers on the annulus.

Each angular Fourier mode decouples into a tridiagonal radial system built
from the conservative finite-volume stencil

    [r_{i+1/2}(P_{i+1}-P_i) - r_{i-1/2}(P_i-P_{i-1})] / (r_i dr^2) - k^2 P_i / r_i^2

which is also what ``discrete_laplacian`` applies on interior rows.
"""

from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np
from scipy import fft
from scipy.linalg import LinAlgError, solve_banded

from app.errors import IncompatibleDataError, SolverFailureError
from app.fields.base import ScalarField
from app.fields.operators import d_theta
from app.geometry.grid import AnnulusGeometry

logger = logging.getLogger(__name__)

COMPATIBILITY_TOLERANCE = 5e-2


def _half_radii(grid: AnnulusGeometry) -> np.ndarray:
    return 0.5 * (grid.r[:-1] + grid.r[1:])


def _radial_bands(grid: AnnulusGeometry, k: int, neumann: bool) -> np.ndarray:
    """Banded matrix of the mode-k operator, rows scaled by 1/(r_i w_i)"""
    r = grid.r
    dr = grid.dr
    half = _half_radii(grid)
    w = grid.radial_weights
    n = grid.n_radial
    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)

    inner = slice(1, n - 1)
    lower[inner] = half[:-1] / (r[inner] * dr * dr)
    upper[inner] = half[1:] / (r[inner] * dr * dr)
    diag[inner] = -(lower[inner] + upper[inner]) - k * k / r[inner] ** 2

    if neumann:
        upper[0] = half[0] / (r[0] * w[0] * dr)
        diag[0] = -upper[0] - k * k / r[0] ** 2
        lower[-1] = half[-1] / (r[-1] * w[-1] * dr)
        diag[-1] = -lower[-1] - k * k / r[-1] ** 2
    else:
        diag[0] = diag[-1] = 1.0

    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    return ab


def _solve_modes(grid: AnnulusGeometry, spectrum: np.ndarray, neumann: bool) -> np.ndarray:
    """Solve every angular mode; spectrum has shape (batch, nr, nmodes)"""
    solution = np.empty_like(spectrum)
    for k in range(spectrum.shape[-1]):
        ab = _radial_bands(grid, k, neumann)
        rhs = spectrum[:, :, k].T
        if neumann and k == 0:
            # Pin the free constant; the projected system is consistent
            ab = ab.copy()
            ab[1, 0] = 1.0
            ab[0, 1] = 0.0
            rhs = rhs.copy()
            rhs[0, :] = 0.0
        try:
            solution[:, :, k] = solve_banded((1, 1), ab, rhs).T
        except (LinAlgError, ValueError) as exc:
            raise SolverFailureError(f"radial solve failed for mode {k}: {exc}") from exc
    return solution


def _as_batch(values: np.ndarray, grid: AnnulusGeometry) -> Tuple[np.ndarray, Tuple[int, ...]]:
    lead = values.shape[:-2]
    return values.reshape((-1,) + grid.shape), lead


def poisson_dirichlet(rhs: ScalarField, bc0: float = 0.0, bc1: float = 0.0) -> ScalarField:
    """Solve -Laplace(psi) = rhs with psi = bc0 on the inner and bc1 on the outer circle"""
    grid = rhs.grid
    batch, lead = _as_batch(np.asarray(rhs.values, dtype=float), grid)
    spectrum = fft.rfft(-batch, axis=-1)
    spectrum[:, 0, :] = 0.0
    spectrum[:, -1, :] = 0.0
    spectrum[:, 0, 0] = bc0 * grid.n_angular
    spectrum[:, -1, 0] = bc1 * grid.n_angular
    values = fft.irfft(_solve_modes(grid, spectrum, neumann=False), n=grid.n_angular, axis=-1)
    if not np.all(np.isfinite(values)):
        raise SolverFailureError("Dirichlet solve produced non-finite values")
    values[:, 0, :] = bc0
    values[:, -1, :] = bc1
    return rhs.with_values(values.reshape(lead + grid.shape))


def neumann_defect(rhs: np.ndarray, flux: Tuple[np.ndarray, np.ndarray], grid: AnnulusGeometry):
    """Compatibility defect and its scale, per batch entry"""
    g0, g1 = flux
    interior = np.sum(rhs * grid.area_weights, axis=(-2, -1))
    boundary = np.sum(grid.r_inner * g0 + grid.r_outer * g1, axis=-1) * grid.dtheta
    scale = np.sum(np.abs(rhs) * grid.area_weights, axis=(-2, -1)) + np.sum(
        grid.r_inner * np.abs(g0) + grid.r_outer * np.abs(g1), axis=-1
    ) * grid.dtheta
    return interior - boundary, scale


def poisson_neumann(
    rhs: ScalarField,
    flux: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    tolerance: float = COMPATIBILITY_TOLERANCE,
) -> ScalarField:
    """Solve Laplace(P) = rhs with grad(P).n = flux (outward normal), zero mean.

    ``flux`` is the pair (inner circle values, outer circle values). The
    compatibility defect is projected out of rhs when it is within
    ``tolerance`` relative to the data scale.
    """
    grid = rhs.grid
    batch, lead = _as_batch(np.asarray(rhs.values, dtype=float), grid)
    if flux is None:
        g0 = np.zeros((batch.shape[0], grid.n_angular))
        g1 = np.zeros_like(g0)
    else:
        g0 = np.broadcast_to(np.asarray(flux[0], dtype=float), lead + (grid.n_angular,)).reshape(-1, grid.n_angular)
        g1 = np.broadcast_to(np.asarray(flux[1], dtype=float), lead + (grid.n_angular,)).reshape(-1, grid.n_angular)

    defect, scale = neumann_defect(batch, (g0, g1), grid)
    relative = np.where(scale > 0.0, np.abs(defect) / np.where(scale > 0.0, scale, 1.0), 0.0)
    if np.any(relative > tolerance):
        raise IncompatibleDataError(
            f"Neumann compatibility defect {float(np.max(relative)):.3e} exceeds tolerance {tolerance:.1e}"
        )
    logger.debug("Neumann compatibility defect (relative) %.3e", float(np.max(relative)) if relative.size else 0.0)

    projected = batch - (defect / grid.area)[:, None, None]
    adjusted = projected.copy()
    w = grid.radial_weights
    adjusted[:, 0, :] -= grid.r_inner * g0 / (grid.r[0] * w[0])
    adjusted[:, -1, :] -= grid.r_outer * g1 / (grid.r[-1] * w[-1])

    spectrum = fft.rfft(adjusted, axis=-1)
    values = fft.irfft(_solve_modes(grid, spectrum, neumann=True), n=grid.n_angular, axis=-1)
    if not np.all(np.isfinite(values)):
        raise SolverFailureError("Neumann solve produced non-finite values")
    mean = np.sum(values * grid.area_weights, axis=(-2, -1)) / grid.area
    values -= mean[:, None, None]
    return rhs.with_values(values.reshape(lead + grid.shape))


def discrete_laplacian(f: ScalarField) -> ScalarField:
    """Solver stencil applied to f; boundary rows are returned as zero"""
    grid = f.grid
    values = np.asarray(f.values, dtype=float)
    half = _half_radii(grid)[:, None]
    flux = half * np.diff(values, axis=-2) / grid.dr
    radial = np.diff(flux, axis=-2) / (grid.r[1:-1, None] * grid.dr)
    angular = d_theta(values, grid, order=2)[..., 1:-1, :] / grid.r[1:-1, None] ** 2
    result = np.zeros_like(values)
    result[..., 1:-1, :] = radial + angular
    return f.with_values(result)
