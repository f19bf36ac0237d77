"""Differential operators on the polar grid.

Angular derivatives are Fourier collocation by default (``stencil="spectral"``)
or second-order periodic central differences (``stencil="local"``); the local
stencil keeps fields that vanish on a node neighbourhood exactly zero after
differentiation. Radial derivatives are second-order finite differences.
All results are expressed in Cartesian components.
"""

from __future__ import annotations

from typing import Literal

import numpy as np
from scipy import fft

from app.fields.base import ScalarField, VectorField, check_same_grid
from app.geometry.grid import AnnulusGeometry

Stencil = Literal["spectral", "local"]


def d_theta(values: np.ndarray, grid: AnnulusGeometry, order: int = 1, stencil: Stencil = "spectral") -> np.ndarray:
    """Angular derivative along the last axis"""
    if stencil == "local":
        result = values
        for _ in range(order):
            result = (np.roll(result, -1, axis=-1) - np.roll(result, 1, axis=-1)) / (2.0 * grid.dtheta)
        return result
    n = grid.n_angular
    wavenumbers = np.arange(n // 2 + 1, dtype=float)
    spectrum = fft.rfft(values, axis=-1)
    multiplier = (1j * wavenumbers) ** order
    if order % 2:
        # Nyquist mode has no odd derivative on a real grid
        multiplier[-1] = 0.0
    return fft.irfft(spectrum * multiplier, n=n, axis=-1)


def d_r(values: np.ndarray, grid: AnnulusGeometry) -> np.ndarray:
    """Radial derivative along axis -2, one-sided second order on the circles"""
    return np.gradient(values, grid.dr, axis=-2, edge_order=2)


def cartesian_gradient(values: np.ndarray, grid: AnnulusGeometry, stencil: Stencil = "spectral"):
    """(d/dx, d/dy) of a grid array via the polar chain rule"""
    fr = d_r(values, grid)
    ft = d_theta(values, grid, stencil=stencil) / grid.R
    dx = grid.cos_theta * fr - grid.sin_theta * ft
    dy = grid.sin_theta * fr + grid.cos_theta * ft
    return dx, dy


def gradient(f: ScalarField, stencil: Stencil = "spectral") -> VectorField:
    dx, dy = cartesian_gradient(f.values, f.grid, stencil)
    return VectorField(f.grid, dx, dy, f.times)


def grad_perp(psi: ScalarField, stencil: Stencil = "spectral") -> VectorField:
    """[d psi/dy, -d psi/dx]"""
    dx, dy = cartesian_gradient(psi.values, psi.grid, stencil)
    return VectorField(psi.grid, dy, -dx, psi.times)


def curl2(F: VectorField, stencil: Stencil = "spectral") -> ScalarField:
    """Scalar curl dF2/dx - dF1/dy"""
    dyx, _ = cartesian_gradient(F.y, F.grid, stencil)
    _, dxy = cartesian_gradient(F.x, F.grid, stencil)
    return ScalarField(F.grid, dyx - dxy, F.times)


def divergence(F: VectorField, stencil: Stencil = "spectral") -> ScalarField:
    dxx, _ = cartesian_gradient(F.x, F.grid, stencil)
    _, dyy = cartesian_gradient(F.y, F.grid, stencil)
    return ScalarField(F.grid, dxx + dyy, F.times)


def flux_divergence(F: VectorField, stencil: Stencil = "spectral") -> ScalarField:
    """(d_r(r F_r) + d_theta F_theta) / r.

    Radial and angular differences commute, so grad_perp(psi, stencil) has
    zero flux divergence to roundoff under the same stencil.
    """
    grid = F.grid
    values = d_r(grid.R * F.radial(), grid) + d_theta(F.azimuthal(), grid, stencil=stencil)
    return ScalarField(grid, values / grid.R, F.times)


def laplacian(f: ScalarField) -> ScalarField:
    """Polar Laplacian f_rr + f_r / r + f_tt / r^2 (collocation, not the solver stencil)"""
    grid = f.grid
    fr = d_r(f.values, grid)
    frr = np.gradient(fr, grid.dr, axis=-2, edge_order=2)
    ftt = d_theta(f.values, grid, order=2)
    return f.with_values(frr + fr / grid.R + ftt / grid.R**2)


def directional(a: VectorField, f: np.ndarray, stencil: Stencil = "spectral") -> np.ndarray:
    """(a . grad) f for a grid array f"""
    dx, dy = cartesian_gradient(f, a.grid, stencil)
    return a.x * dx + a.y * dy


def advective(a: VectorField, b: VectorField, stencil: Stencil = "spectral") -> VectorField:
    """(a . grad) b componentwise"""
    check_same_grid(a.grid, b.grid)
    return b.with_components(directional(a, b.x, stencil), directional(a, b.y, stencil))


def dot(a: VectorField, b: VectorField) -> np.ndarray:
    return a.x * b.x + a.y * b.y


def wedge(a, b) -> np.ndarray:
    """a1 b2 - a2 b1 for pairs of component arrays"""
    return a[0] * b[1] - a[1] * b[0]


def time_derivative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Centred differences along the leading time axis"""
    if len(times) < 2:
        return np.zeros_like(values)
    edge_order = 2 if len(times) >= 3 else 1
    return np.gradient(values, times, axis=0, edge_order=edge_order)
