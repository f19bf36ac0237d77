"""Drift fields and their flow maps.

Characteristics dZ/dt = z(Z, t) are integrated with classical RK4 in
Cartesian coordinates. Drift fields are evaluated through bicubic spatial
interpolation and linear interpolation between stored time samples.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from app.errors import NontangentialDriftError
from app.fields.base import VectorField
from app.geometry.grid import AnnulusGeometry
from app.transport.interpolation import PolarInterpolator

logger = logging.getLogger(__name__)

TANGENCY_TOLERANCE = 1e-6
DEFAULT_SAMPLES_PER_PERIOD = 8
DEFAULT_RK_SUBSTEPS = 8


def sample_times(t0: float, t1: float, K: int, samples_per_period: int = DEFAULT_SAMPLES_PER_PERIOD) -> np.ndarray:
    """Uniform sample times t_n = n / (K * samples_per_period) covering [t0, t1]"""
    dt = 1.0 / (K * samples_per_period)
    n0 = int(round(t0 / dt))
    n1 = int(round(t1 / dt))
    return np.arange(n0, n1 + 1) * dt


def check_tangential(field: VectorField, tolerance: float = TANGENCY_TOLERANCE) -> float:
    """Relative normal defect on both circles; raise above tolerance"""
    scale = field.sup()
    if scale == 0.0:
        return 0.0
    defect = field.normal_defect() / scale
    if defect > tolerance:
        raise NontangentialDriftError(f"drift normal component {defect:.3e} (relative) exceeds {tolerance:.1e}")
    return defect


class Drift(ABC):
    """Time-dependent velocity on the annulus"""

    grid: AnnulusGeometry
    time_step: float

    @abstractmethod
    def velocity(self, x: np.ndarray, y: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Velocity at arbitrary points"""
        pass

    @abstractmethod
    def on_grid(self, t: float) -> VectorField:
        """Velocity sampled at the grid nodes"""
        pass

    @abstractmethod
    def sup(self) -> float:
        pass


class SampledDrift(Drift):
    """Drift stored as time samples, linear in time between them"""

    def __init__(
        self,
        field: VectorField,
        rk_substeps: int = DEFAULT_RK_SUBSTEPS,
        tangency_tolerance: float = TANGENCY_TOLERANCE,
    ):
        if field.times is None:
            raise ValueError("SampledDrift needs a time-sampled field")
        check_tangential(field, tangency_tolerance)
        self.field = field
        self.grid = field.grid
        self.times = np.asarray(field.times, dtype=float)
        spacing = float(np.min(np.diff(self.times))) if len(self.times) > 1 else 1.0
        self.time_step = spacing / rk_substeps
        self._cache: Dict[int, Tuple[PolarInterpolator, PolarInterpolator]] = {}

    def _interpolators(self, index: int):
        if index not in self._cache:
            self._cache[index] = (
                PolarInterpolator(self.grid, self.field.x[index], "spline"),
                PolarInterpolator(self.grid, self.field.y[index], "spline"),
            )
        return self._cache[index]

    def _bracket(self, t: float) -> Tuple[int, int, float]:
        times = self.times
        if len(times) == 1 or t <= times[0]:
            return 0, 0, 0.0
        if t >= times[-1]:
            last = len(times) - 1
            return last, last, 0.0
        upper = int(np.searchsorted(times, t, side="right"))
        lower = upper - 1
        weight = (t - times[lower]) / (times[upper] - times[lower])
        return lower, upper, float(weight)

    def velocity(self, x, y, t):
        lower, upper, weight = self._bracket(t)
        ix, iy = self._interpolators(lower)
        vx, vy = ix(x, y), iy(x, y)
        if weight > 0.0:
            jx, jy = self._interpolators(upper)
            vx = (1.0 - weight) * vx + weight * jx(x, y)
            vy = (1.0 - weight) * vy + weight * jy(x, y)
        return vx, vy

    def on_grid(self, t: float) -> VectorField:
        lower, upper, weight = self._bracket(t)
        x = (1.0 - weight) * self.field.x[lower] + weight * self.field.x[upper]
        y = (1.0 - weight) * self.field.y[lower] + weight * self.field.y[upper]
        return VectorField(self.grid, x, y)

    def sup(self) -> float:
        return self.field.sup()


class SeparableDrift(Drift):
    """amplitude(t) times a steady field"""

    def __init__(
        self,
        base: VectorField,
        amplitude: Callable[[float], float],
        time_step: float,
        tangency_tolerance: float = TANGENCY_TOLERANCE,
    ):
        check_tangential(base, tangency_tolerance)
        self.base = base
        self.grid = base.grid
        self.amplitude = amplitude
        self.time_step = time_step
        self._ix = PolarInterpolator(self.grid, base.x, "spline")
        self._iy = PolarInterpolator(self.grid, base.y, "spline")
        self._amplitude_sup: Optional[float] = None

    def velocity(self, x, y, t):
        a = float(self.amplitude(t))
        if a == 0.0:
            return np.zeros_like(x), np.zeros_like(y)
        return a * self._ix(x, y), a * self._iy(x, y)

    def on_grid(self, t: float) -> VectorField:
        return self.base * float(self.amplitude(t))

    def sample(self, times: np.ndarray) -> VectorField:
        a = np.array([float(self.amplitude(t)) for t in times])[:, None, None]
        return VectorField(self.grid, a * self.base.x, a * self.base.y, np.asarray(times, dtype=float))

    def sup(self) -> float:
        if self._amplitude_sup is None:
            grid_t = np.linspace(0.0, 1.0, 4097)
            self._amplitude_sup = float(np.max(np.abs([self.amplitude(t) for t in grid_t])))
        return self._amplitude_sup * self.base.sup()


def zero_drift(grid: AnnulusGeometry, time_step: float) -> SeparableDrift:
    return SeparableDrift(VectorField.zeros(grid), lambda t: 0.0, time_step)


@dataclass(frozen=True)
class FlowMap:
    """Positions Z(x, s, t_k) of every grid node x for the recorded times t_k"""

    grid: AnnulusGeometry
    source_time: float
    target_times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    max_clamp: float = 0.0

    def index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.target_times - t)))
        if not np.isclose(self.target_times[k], t, rtol=0.0, atol=1e-12):
            raise KeyError(f"time {t} not recorded in flow map")
        return k

    def at(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        k = self.index(t)
        return self.x[k], self.y[k]

    def polar(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        x, y = self.at(t)
        return self.grid.polar(x, y)

    @property
    def end(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.x[-1], self.y[-1]


def _clamp(grid: AnnulusGeometry, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    r = np.hypot(x, y)
    clamped = np.clip(r, grid.r_inner, grid.r_outer)
    excess = float(np.max(np.abs(clamped - r))) if r.size else 0.0
    if excess == 0.0:
        return x, y, 0.0
    scale = clamped / np.where(r > 0.0, r, 1.0)
    return x * scale, y * scale, excess


def rk4_step(drift: Drift, x: np.ndarray, y: np.ndarray, t: float, h: float):
    k1x, k1y = drift.velocity(x, y, t)
    k2x, k2y = drift.velocity(x + 0.5 * h * k1x, y + 0.5 * h * k1y, t + 0.5 * h)
    k3x, k3y = drift.velocity(x + 0.5 * h * k2x, y + 0.5 * h * k2y, t + 0.5 * h)
    k4x, k4y = drift.velocity(x + h * k3x, y + h * k3y, t + h)
    x_new = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    y_new = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    return x_new, y_new


def integrate_points(
    drift: Drift,
    x: np.ndarray,
    y: np.ndarray,
    s: float,
    targets: Sequence[float],
    time_step: Optional[float] = None,
):
    """Carry points from time s through the monotone target times.

    Returns stacked positions per target and the largest radial clamp.
    """
    grid = drift.grid
    step = drift.time_step if time_step is None else time_step
    xs, ys = [], []
    cx, cy = np.array(x, dtype=float), np.array(y, dtype=float)
    current = float(s)
    max_clamp = 0.0
    for target in targets:
        span = float(target) - current
        n_steps = int(np.ceil(abs(span) / step - 1e-9)) if span != 0.0 else 0
        h = span / n_steps if n_steps else 0.0
        for k in range(n_steps):
            cx, cy = rk4_step(drift, cx, cy, current + k * h, h)
            cx, cy, excess = _clamp(grid, cx, cy)
            max_clamp = max(max_clamp, excess)
        current = float(target)
        xs.append(cx.copy())
        ys.append(cy.copy())
    return np.stack(xs), np.stack(ys), max_clamp


def integrate_flow(
    drift: Drift,
    s: float,
    t: float,
    record: Optional[Sequence[float]] = None,
    time_step: Optional[float] = None,
) -> FlowMap:
    """Flow map Z(x, s, .) of all grid nodes, recorded at ``record`` (default [t])"""
    grid = drift.grid
    targets = np.asarray([t] if record is None else record, dtype=float)
    if np.any(np.diff(targets) * np.sign(t - s) < 0.0):
        raise ValueError("record times must run monotonically from s towards t")
    if t == s and record is None:
        return FlowMap(grid, s, targets, grid.X[None].copy(), grid.Y[None].copy())
    xs, ys, max_clamp = integrate_points(drift, grid.X, grid.Y, s, targets, time_step)
    if max_clamp > 1e-3 * grid.spacing:
        logger.warning("Radial clamp %.3e during flow integration on [%.4g, %.4g]", max_clamp, s, t)
    else:
        logger.debug("Radial clamp %.3e during flow integration on [%.4g, %.4g]", max_clamp, s, t)
    return FlowMap(grid, float(s), targets, xs, ys, max_clamp)


def drift_deviation(a: Drift, b: Drift, times: np.ndarray) -> float:
    """Sup over sampled times and grid nodes of |a - b|"""
    best = 0.0
    for t in times:
        best = max(best, (a.on_grid(t) - b.on_grid(t)).sup())
    return best
