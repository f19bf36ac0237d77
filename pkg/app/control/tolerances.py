"""Residual gates derived from the discretization.

Space and time are both second order, so a consistent trajectory leaves
relative residuals of size h^2 + dt^2. The gates fire at a fixed multiple
of that size, and never above an order-one relative residual.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from app.geometry.grid import AnnulusGeometry

RESIDUAL_EXCESS_FACTOR = 100.0
RESIDUAL_CEILING = 1.0


def discretization_tolerance(grid: AnnulusGeometry, times: Optional[np.ndarray] = None) -> float:
    """h^2 + dt^2 with h the grid spacing and dt the widest sample gap"""
    dt = 0.0
    if times is not None and len(times) > 1:
        dt = float(np.max(np.diff(np.asarray(times, dtype=float))))
    return grid.spacing**2 + dt**2


def residual_tolerance(
    grid: AnnulusGeometry,
    times: Optional[np.ndarray] = None,
    override: Optional[float] = None,
) -> float:
    """Gate for relative residuals; an explicit override wins"""
    if override is not None:
        return float(override)
    return min(RESIDUAL_EXCESS_FACTOR * discretization_tolerance(grid, times), RESIDUAL_CEILING)
