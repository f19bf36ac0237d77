"""Elsasser variables z+- = V +- H and the vorticity sources G+-"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

from app.fields.base import ScalarField, VectorField, check_same_grid
from app.fields.operators import Stencil, cartesian_gradient


@dataclass(frozen=True)
class ElsasserPair:
    """Symmetrized unknowns z_plus = V + H, z_minus = V - H"""

    z_plus: VectorField
    z_minus: VectorField

    def to_primitive(self) -> Tuple[VectorField, VectorField]:
        return elsasser_inverse(self)


def elsasser_convert(u: VectorField, B: VectorField) -> ElsasserPair:
    check_same_grid(u.grid, B.grid)
    return ElsasserPair(u + B, u - B)


def elsasser_inverse(pair: ElsasserPair) -> Tuple[VectorField, VectorField]:
    """(V, H) = ((z+ + z-) / 2, (z+ - z-) / 2)"""
    zp, zm = pair.z_plus, pair.z_minus
    V = zp.with_components(0.5 * (zp.x + zm.x), 0.5 * (zp.y + zm.y))
    H = zp.with_components(0.5 * (zp.x - zm.x), 0.5 * (zp.y - zm.y))
    return V, H


def _gpm(drift: VectorField, carried: VectorField, stencil: Stencil) -> ScalarField:
    """-sum_l grad(drift_l) ^ d_l(carried)"""
    grid = drift.grid
    d1a1, d2a1 = cartesian_gradient(drift.x, grid, stencil)
    d1a2, d2a2 = cartesian_gradient(drift.y, grid, stencil)
    d1b1, d2b1 = cartesian_gradient(carried.x, grid, stencil)
    d1b2, d2b2 = cartesian_gradient(carried.y, grid, stencil)
    # l = 1: grad(a1) ^ d1 b ; l = 2: grad(a2) ^ d2 b, with u ^ v = u1 v2 - u2 v1
    total = (d1a1 * d1b2 - d2a1 * d1b1) + (d1a2 * d2b2 - d2a2 * d2b1)
    return ScalarField(grid, -total, drift.times)


def gpm_source(z_plus: VectorField, z_minus: VectorField, stencil: Stencil = "spectral") -> Tuple[ScalarField, ScalarField]:
    """Sources of the transported Elsasser vorticities curl z+-"""
    check_same_grid(z_plus.grid, z_minus.grid)
    return _gpm(z_minus, z_plus, stencil), _gpm(z_plus, z_minus, stencil)
