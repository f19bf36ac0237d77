"""First cohomology of the annulus and div-curl reconstruction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from app.fields.base import ScalarField, VectorField, check_same_grid
from app.fields.norms import pairing_l2
from app.fields.operators import grad_perp
from app.fields.poisson import poisson_dirichlet
from app.geometry.grid import AnnulusGeometry


def grad_perp_log_radius(grid: AnnulusGeometry) -> VectorField:
    """Closed form of grad_perp(ln r) = (sin(theta), -cos(theta)) / r"""
    return VectorField(grid, grid.sin_theta / grid.R, -grid.cos_theta / grid.R)


@dataclass(frozen=True)
class CohomologyBasis:
    """Normalized harmonic field Q spanning the cohomology of the annulus"""

    q: VectorField
    normalization: float

    @property
    def grid(self) -> AnnulusGeometry:
        return self.q.grid

    def project(self, F: VectorField) -> np.ndarray:
        """<F, Q> per time sample (or a scalar) under the summation-by-parts pairing"""
        return pairing_l2(F, self.q)

    def scaled(self, coefficients, times=None) -> VectorField:
        """Q times a scalar or a per-time series"""
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.ndim == 0:
            return self.q * float(coefficients)
        c = coefficients[:, None, None]
        return VectorField(self.grid, c * self.q.x, c * self.q.y, times)


def cohomology_basis(grid: AnnulusGeometry) -> CohomologyBasis:
    """Q = c grad_perp(ln r) with <Q, Q> = 1 under the projection pairing.

    The constant agrees with 1/sqrt(2 pi ln(r2/r1)) up to quadrature error.
    """
    base = grad_perp_log_radius(grid)
    c = 1.0 / np.sqrt(float(pairing_l2(base, base)))
    return CohomologyBasis(base * c, float(c))


def div_curl_reconstruct(j: ScalarField, c, basis: CohomologyBasis) -> VectorField:
    """Divergence-free tangential field with curl j and cohomology projection c.

    Returns grad_perp(A) + (c - <grad_perp(A), Q>) Q with -Laplace(A) = j,
    A = 0 on both circles. ``c`` may be a per-time series when j is.
    """
    check_same_grid(j.grid, basis.grid)
    potential = poisson_dirichlet(j, 0.0, 0.0)
    field = grad_perp(potential)
    correction = np.asarray(c, dtype=float) - basis.project(field)
    if field.is_series:
        correction = np.broadcast_to(correction, (field.x.shape[0],))
        factor = correction[:, None, None]
        return field.with_components(field.x + factor * basis.q.x, field.y + factor * basis.q.y)
    return field + basis.q * float(correction)
