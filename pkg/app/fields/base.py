"""Grid-sampled fields.

Values carry the grid shape on their trailing two axes. A field with a
``times`` array holds one sample per time on a leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from app.errors import BoundaryConstantError, GridMismatchError
from app.geometry.grid import AnnulusGeometry


def check_same_grid(*grids: AnnulusGeometry) -> None:
    first = grids[0]
    for other in grids[1:]:
        if other != first:
            raise GridMismatchError(f"grid mismatch: {first} vs {other}")


@dataclass(frozen=True)
class ScalarField:
    """Scalar values on the polar grid"""

    grid: AnnulusGeometry
    values: np.ndarray
    times: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, grid: AnnulusGeometry, times: Optional[np.ndarray] = None) -> "ScalarField":
        shape = grid.shape if times is None else (len(times),) + grid.shape
        return cls(grid, np.zeros(shape), times)

    @property
    def is_series(self) -> bool:
        return self.times is not None

    def at(self, index: int) -> "ScalarField":
        return ScalarField(self.grid, self.values[index])

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return replace(self, values=values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def __add__(self, other: "ScalarField") -> "ScalarField":
        check_same_grid(self.grid, other.grid)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        check_same_grid(self.grid, other.grid)
        return self.with_values(self.values - other.values)

    def __mul__(self, factor) -> "ScalarField":
        return self.with_values(self.values * factor)

    __rmul__ = __mul__


@dataclass(frozen=True)
class VectorField:
    """Cartesian components (x, y) sampled on the polar grid"""

    grid: AnnulusGeometry
    x: np.ndarray
    y: np.ndarray
    times: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, grid: AnnulusGeometry, times: Optional[np.ndarray] = None) -> "VectorField":
        shape = grid.shape if times is None else (len(times),) + grid.shape
        return cls(grid, np.zeros(shape), np.zeros(shape), times)

    @property
    def is_series(self) -> bool:
        return self.times is not None

    def at(self, index: int) -> "VectorField":
        return VectorField(self.grid, self.x[index], self.y[index])

    def with_components(self, x: np.ndarray, y: np.ndarray) -> "VectorField":
        return replace(self, x=x, y=y)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    def sup(self) -> float:
        return float(np.max(self.magnitude())) if self.x.size else 0.0

    def radial(self) -> np.ndarray:
        return self.x * self.grid.cos_theta + self.y * self.grid.sin_theta

    def azimuthal(self) -> np.ndarray:
        return -self.x * self.grid.sin_theta + self.y * self.grid.cos_theta

    def normal_defect(self) -> float:
        """Largest |F.n| over both boundary circles"""
        radial = self.radial()
        return float(max(np.max(np.abs(radial[..., 0, :])), np.max(np.abs(radial[..., -1, :]))))

    def __add__(self, other: "VectorField") -> "VectorField":
        check_same_grid(self.grid, other.grid)
        return self.with_components(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "VectorField") -> "VectorField":
        check_same_grid(self.grid, other.grid)
        return self.with_components(self.x - other.x, self.y - other.y)

    def __mul__(self, factor) -> "VectorField":
        factor = np.asarray(factor)
        if factor.ndim == 1 and self.is_series:
            factor = factor[:, None, None]
        return self.with_components(self.x * factor, self.y * factor)

    __rmul__ = __mul__

    def __neg__(self) -> "VectorField":
        return self.with_components(-self.x, -self.y)


@dataclass(frozen=True)
class StreamFunction:
    """Stream function psi with its constant values on the two circles"""

    psi: ScalarField
    boundary_values: Tuple[float, float] = (0.0, 0.0)

    @property
    def grid(self) -> AnnulusGeometry:
        return self.psi.grid

    @classmethod
    def from_scalar(cls, psi: ScalarField, tolerance: float = 1e-10) -> "StreamFunction":
        """Read the circle constants off psi, checking they are constant"""
        values = psi.values
        inner = values[..., 0, :]
        outer = values[..., -1, :]
        scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
        if np.ptp(inner) > tolerance * scale or np.ptp(outer) > tolerance * scale:
            raise BoundaryConstantError("stream function is not constant on a boundary circle")
        return cls(psi, (float(np.mean(inner)), float(np.mean(outer))))

    def require_zero_boundary(self, tolerance: float = 1e-10) -> None:
        values = self.psi.values
        scale = max(1.0, self.psi.sup())
        defect = max(
            float(np.max(np.abs(values[..., 0, :]))), float(np.max(np.abs(values[..., -1, :])))
        )
        if defect > tolerance * scale:
            raise BoundaryConstantError(f"stream function not zero on the circles (defect {defect:.3e})")


def time_axis_multiplier(times: Optional[np.ndarray], series: np.ndarray) -> np.ndarray:
    """Reshape a per-time series for broadcasting against (nt, nr, ntheta)"""
    series = np.asarray(series, dtype=float)
    if times is None:
        return series
    return series.reshape((-1, 1, 1))
