"""Bicubic interpolation of grid arrays at arbitrary annulus points.

Two flavours:

* ``"spline"``: scipy's interpolating bicubic spline, periodic in theta via
  padded copies. Smooth, used for drift velocities.
* ``"local"``: tensor-product cubic Lagrange on the 4x4 surrounding nodes.
  The value at a point depends on nearby nodes only, so a field that is
  zero on a neighbourhood stays exactly zero after transport.
"""

from __future__ import annotations

from typing import Literal

import numpy as np
from scipy.interpolate import RectBivariateSpline

from app.geometry.grid import AnnulusGeometry

PERIODIC_PAD = 3

Method = Literal["local", "spline"]


def _lagrange_weights(s: np.ndarray):
    """Cubic Lagrange basis on nodes 0, 1, 2, 3 evaluated at offset s"""
    return (
        -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
        s * (s - 2.0) * (s - 3.0) / 2.0,
        -s * (s - 1.0) * (s - 3.0) / 2.0,
        s * (s - 1.0) * (s - 2.0) / 6.0,
    )


class PolarInterpolator:
    """Interpolate one grid array at points given in polar or Cartesian form"""

    def __init__(self, grid: AnnulusGeometry, values: np.ndarray, method: Method = "local"):
        self.grid = grid
        self.method = method
        self.values = np.asarray(values, dtype=float)
        if method == "spline":
            pad = PERIODIC_PAD
            theta = grid.theta
            padded_theta = np.concatenate([theta[-pad:] - 2.0 * np.pi, theta, theta[:pad] + 2.0 * np.pi])
            padded = np.concatenate([self.values[:, -pad:], self.values, self.values[:, :pad]], axis=1)
            self._spline = RectBivariateSpline(grid.r, padded_theta, padded, kx=3, ky=3, s=0)
        elif method != "local":
            raise ValueError(f"unknown interpolation method: {method}")

    def _local(self, r: np.ndarray, theta: np.ndarray) -> np.ndarray:
        grid = self.grid
        fi = (r - grid.r_inner) / grid.dr
        fj = theta / grid.dtheta
        i0 = np.clip(np.floor(fi).astype(int) - 1, 0, grid.n_radial - 4)
        j0 = np.floor(fj).astype(int) - 1
        wr = _lagrange_weights(fi - i0)
        wt = _lagrange_weights(fj - j0)
        result = np.zeros(np.shape(r))
        for a in range(4):
            partial = np.zeros(np.shape(r))
            for b in range(4):
                partial += wt[b] * self.values[i0 + a, np.mod(j0 + b, grid.n_angular)]
            result += wr[a] * partial
        return result

    def polar(self, r: np.ndarray, theta: np.ndarray) -> np.ndarray:
        r = np.clip(r, self.grid.r_inner, self.grid.r_outer)
        theta = np.mod(theta, 2.0 * np.pi)
        if self.method == "spline":
            return self._spline(r, theta, grid=False)
        return self._local(r, theta)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        r, theta = self.grid.polar(x, y)
        return self.polar(r, theta)


def interpolate(grid: AnnulusGeometry, values: np.ndarray, x: np.ndarray, y: np.ndarray, method: Method = "local") -> np.ndarray:
    """One-shot interpolation of a single grid array"""
    return PolarInterpolator(grid, values, method)(x, y)
