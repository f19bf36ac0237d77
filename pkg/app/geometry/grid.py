"""Polar grid on the annulus r_inner <= r <= r_outer.

Arrays sampled on the grid have trailing shape (n_radial, n_angular):
axis -2 runs over radii (both circles included), axis -1 over angles
(uniform on [0, 2*pi), periodic).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np

from app.errors import InvalidGeometryError

MIN_RADIAL = 8
MIN_ANGULAR = 16


@dataclass(frozen=True)
class AnnulusGeometry:
    """Annulus E between the inner circle (r1) and the outer circle (r2)"""

    r_inner: float
    r_outer: float
    n_radial: int
    n_angular: int

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_radial, self.n_angular)

    @cached_property
    def r(self) -> np.ndarray:
        return np.linspace(self.r_inner, self.r_outer, self.n_radial)

    @cached_property
    def theta(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_angular) / self.n_angular

    @property
    def dr(self) -> float:
        return (self.r_outer - self.r_inner) / (self.n_radial - 1)

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.n_angular

    @property
    def log_ratio(self) -> float:
        """ln(r2 / r1)"""
        return float(np.log(self.r_outer / self.r_inner))

    @cached_property
    def R(self) -> np.ndarray:
        return np.broadcast_to(self.r[:, None], self.shape).copy()

    @cached_property
    def TH(self) -> np.ndarray:
        return np.broadcast_to(self.theta[None, :], self.shape).copy()

    @cached_property
    def X(self) -> np.ndarray:
        return self.R * np.cos(self.TH)

    @cached_property
    def Y(self) -> np.ndarray:
        return self.R * np.sin(self.TH)

    @cached_property
    def cos_theta(self) -> np.ndarray:
        return np.cos(self.TH)

    @cached_property
    def sin_theta(self) -> np.ndarray:
        return np.sin(self.TH)

    @cached_property
    def radial_weights(self) -> np.ndarray:
        """Trapezoid weights in r (dr inside, dr/2 on the circles)"""
        w = np.full(self.n_radial, self.dr)
        w[0] = w[-1] = 0.5 * self.dr
        return w

    @cached_property
    def area_weights(self) -> np.ndarray:
        """Quadrature weights r dr dtheta per node"""
        return (self.radial_weights * self.r)[:, None] * np.full(self.shape, self.dtheta)

    @cached_property
    def pairing_radial_weights(self) -> np.ndarray:
        """Radial weights w with sum_i w_i (d_r f)_i = f(r2) - f(r1) exactly.

        Summation by parts for the second-order one-sided/central stencil of
        ``d_r``; integrates linear functions exactly, so the area is kept.
        """
        w = np.full(self.n_radial, self.dr)
        w[0] = w[-1] = 0.25 * self.dr
        w[1] = w[-2] = 1.25 * self.dr
        return w

    @cached_property
    def pairing_area_weights(self) -> np.ndarray:
        """r dr dtheta with the summation-by-parts radial weights"""
        return (self.pairing_radial_weights * self.r)[:, None] * np.full(self.shape, self.dtheta)

    @property
    def area(self) -> float:
        return float(self.area_weights.sum())

    @property
    def spacing(self) -> float:
        """Diagonal of the widest grid cell"""
        return float(np.hypot(self.dr, self.r_outer * self.dtheta))

    def scaled(self, factor: int) -> "AnnulusGeometry":
        """Same annulus with factor-times finer resolution"""
        return build_annulus_grid(
            self.r_inner,
            self.r_outer,
            (self.n_radial - 1) * factor + 1,
            self.n_angular * factor,
        )

    def polar(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Cartesian points to (r, theta) with theta in [0, 2*pi)"""
        return np.hypot(x, y), np.mod(np.arctan2(y, x), 2.0 * np.pi)


def build_annulus_grid(r1: float, r2: float, nr: int, ntheta: int) -> AnnulusGeometry:
    """Build the polar grid, validating radii and counts"""
    if not (0.0 < r1 < r2):
        raise InvalidGeometryError(f"need 0 < r1 < r2, got r1={r1}, r2={r2}")
    if nr < MIN_RADIAL:
        raise InvalidGeometryError(f"n_radial must be >= {MIN_RADIAL}, got {nr}")
    if ntheta < MIN_ANGULAR or ntheta % 2:
        raise InvalidGeometryError(f"n_angular must be even and >= {MIN_ANGULAR}, got {ntheta}")
    return AnnulusGeometry(float(r1), float(r2), int(nr), int(ntheta))


def wrap_angle(angle: np.ndarray) -> np.ndarray:
    """Map angles to (-pi, pi]"""
    return np.pi - np.mod(np.pi - angle, 2.0 * np.pi)


def chord(radius: float, angle: float) -> float:
    """Distance between two points at the same radius separated by angle"""
    return 2.0 * radius * float(np.sin(0.5 * min(abs(angle), np.pi)))
