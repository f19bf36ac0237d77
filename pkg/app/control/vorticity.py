"""Vorticity null control along a flushing drift.

Every initial point is labelled by the times its trajectory crosses the cut.
Points are grouped into overlapping bins of crossing time with a smooth
partition of unity; bin l is switched off by gamma(t - t_l) while its
points travel through Lambda. The resulting w solves

    dw/dt + z.grad(w) = f,  w(0) = w0,  w(1) = 0,

with f supported where points are near the cut.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from app.errors import FlushingViolationError
from app.fields.base import ScalarField
from app.geometry.layout import ControlLayout
from app.geometry.profiles import smooth_step
from app.transport.advection import advect_arrays
from app.transport.checks import crossing_times
from app.transport.flow import Drift, integrate_flow
from app.transport.interpolation import PolarInterpolator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CrossingCover:
    """Crossing-time labels of the initial nodes and the bin layout"""

    first: np.ndarray
    second: np.ndarray
    bin_width: float
    halfwidth: float
    n_bins: int

    def blend(self) -> np.ndarray:
        """Weight of the first crossing; 0 where it comes too early to switch off"""
        b, d = self.halfwidth, self.bin_width
        first = np.nan_to_num(self.first, nan=np.inf)
        return smooth_step(b + d, b + 2.0 * d)(np.minimum(first, 1e6))


def build_crossing_cover(drift: Drift, layout: ControlLayout, times: np.ndarray, halfwidth: float, bin_width: float) -> CrossingCover:
    """First two cut crossings of every node under the drift flow"""
    flow = integrate_flow(drift, times[0], times[-1], record=times)
    crossings = crossing_times(flow, layout.sigma_angle, count=2)
    first, second = crossings[0] - times[0], crossings[1] - times[0]
    horizon = times[-1] - times[0]
    cover = CrossingCover(first, second, bin_width, halfwidth, int(np.ceil(horizon / bin_width)) + 1)

    latest = horizon - halfwidth - bin_width
    blend = cover.blend()
    needs_first = blend > 0.0
    needs_second = blend < 1.0
    bad_first = needs_first & ~(first <= latest)
    bad_second = needs_second & ~(second <= latest)
    failing = int(np.sum(bad_first | bad_second))
    if failing:
        raise FlushingViolationError(
            f"{failing} nodes have no usable cut crossing before t = {latest:.4g}"
        )
    logger.debug(
        "Crossing cover: %d bins of width %.3g, first crossings in [%.3g, %.3g]",
        cover.n_bins,
        bin_width,
        float(np.nanmin(first)),
        float(np.nanmax(first)),
    )
    return cover


def _switch(tau: np.ndarray, t: float, gamma, bin_width: float, derivative: bool) -> np.ndarray:
    """Gamma-weighted switch-off for crossing time tau, blended between bin centres"""
    tau = np.nan_to_num(tau, nan=0.0)
    lower = np.floor(tau / bin_width)
    u = tau / bin_width - lower
    blend = smooth_step(0.0, 1.0)(u)
    c0 = lower * bin_width
    c1 = c0 + bin_width
    g = gamma.derivative if derivative else gamma
    return g(t - c0) * (1.0 - blend) + g(t - c1) * blend


def label_weights(cover: CrossingCover, t: float, derivative: bool = False) -> np.ndarray:
    """F(t, x0) (or its time derivative) for every initial node"""
    gamma = smooth_step(-cover.halfwidth, cover.halfwidth, descending=True)
    s = cover.blend()
    first = _switch(cover.first, t, gamma, cover.bin_width, derivative)
    second = _switch(cover.second, t, gamma, cover.bin_width, derivative)
    return s * first + (1.0 - s) * second


def vorticity_control(
    drift: Drift,
    w0: ScalarField,
    layout: ControlLayout,
    times: np.ndarray,
    halfwidth: float,
    bin_width: float,
) -> Dict:
    """Controlled vorticity w and control f on the sample times.

    Returns the two trajectories and the crossing cover. w(., t_end) is
    exactly zero once every node has a usable crossing.
    """
    grid = w0.grid
    times = np.asarray(times, dtype=float)
    zeros = np.zeros((len(times),) + grid.shape)
    if not np.any(w0.values):
        return {
            "w": ScalarField(grid, zeros, times),
            "f": ScalarField(grid, zeros.copy(), times),
            "cover": None,
        }

    cover = build_crossing_cover(drift, layout, times, halfwidth, bin_width)
    label_x, label_y = advect_arrays(drift, [grid.X, grid.Y], times)

    w = np.empty_like(zeros)
    f = np.empty_like(zeros)
    for n, t in enumerate(times):
        local_t = t - times[0]
        weighted = label_weights(cover, local_t) * w0.values
        rate = label_weights(cover, local_t, derivative=True) * w0.values
        if n == 0:
            w[n] = weighted
            f[n] = rate
            continue
        w[n] = PolarInterpolator(grid, weighted)(label_x[n], label_y[n]) if np.any(weighted) else 0.0
        f[n] = PolarInterpolator(grid, rate)(label_x[n], label_y[n]) if np.any(rate) else 0.0
    logger.info(
        "Vorticity control: |w0|=%.3e, |w(end)|=%.3e, |f|=%.3e",
        float(np.max(np.abs(w0.values))),
        float(np.max(np.abs(w[-1]))),
        float(np.max(np.abs(f))),
    )
    return {"w": ScalarField(grid, w, times), "f": ScalarField(grid, f, times), "cover": cover}
