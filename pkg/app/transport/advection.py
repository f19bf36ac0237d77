"""Semi-Lagrangian transport on the annulus.

Each step traces the characteristic through every grid node back from
t_{n+1} to t_n and interpolates the previous sample at the departure point.
Sources are integrated along the characteristic with the midpoint rule.
"""

from __future__ import annotations

import logging
from typing import Callable, List, Optional, Sequence

import numpy as np

from app.fields.base import ScalarField, StreamFunction, VectorField
from app.fields.operators import advective
from app.transport.flow import Drift, integrate_points
from app.transport.interpolation import PolarInterpolator

logger = logging.getLogger(__name__)

Source = Callable[[float], np.ndarray]


def sampled_source(values: np.ndarray, times: np.ndarray) -> Source:
    """Linear-in-time source from stored samples (leading axis = time)"""
    times = np.asarray(times, dtype=float)

    def source(t: float) -> np.ndarray:
        if t <= times[0]:
            return values[0]
        if t >= times[-1]:
            return values[-1]
        upper = int(np.searchsorted(times, t, side="right"))
        lower = upper - 1
        w = (t - times[lower]) / (times[upper] - times[lower])
        return (1.0 - w) * values[lower] + w * values[upper]

    return source


def departure_points(drift: Drift, t_from: float, t_to: float):
    """Backward characteristics of all nodes: positions at the midpoint and at t_to"""
    grid = drift.grid
    t_mid = 0.5 * (t_from + t_to)
    xs, ys, _ = integrate_points(drift, grid.X, grid.Y, t_from, [t_mid, t_to])
    return (xs[0], ys[0]), (xs[1], ys[1])


def advect_arrays(
    drift: Drift,
    initial: Sequence[np.ndarray],
    times: np.ndarray,
    sources: Optional[Sequence[Optional[Source]]] = None,
) -> List[np.ndarray]:
    """Transport several grid arrays along the same characteristics.

    Departure points are traced once per step and shared by all arrays.
    Returns one (n_times, nr, ntheta) array per input.
    """
    grid = drift.grid
    times = np.asarray(times, dtype=float)
    sources = [None] * len(initial) if sources is None else list(sources)
    histories: List[List[np.ndarray]] = [[np.array(v, dtype=float)] for v in initial]
    for n in range(len(times) - 1):
        t0, t1 = times[n], times[n + 1]
        t_mid = 0.5 * (t0 + t1)
        active = [bool(np.any(h[-1])) or src is not None for h, src in zip(histories, sources)]
        if not any(active):
            for h in histories:
                h.append(np.zeros_like(h[-1]))
            continue
        (mx, my), (dx, dy) = departure_points(drift, t1, t0)
        for h, src, is_active in zip(histories, sources, active):
            if not is_active:
                h.append(np.zeros_like(h[-1]))
                continue
            nxt = PolarInterpolator(grid, h[-1])(dx, dy)
            if src is not None:
                g_mid = src(t_mid)
                if np.any(g_mid):
                    nxt = nxt + (t1 - t0) * PolarInterpolator(grid, g_mid)(mx, my)
            h.append(nxt)
    return [np.stack(h) for h in histories]


def advect_scalar(
    drift: Drift,
    v0: ScalarField,
    times: np.ndarray,
    source: Optional[Source] = None,
) -> ScalarField:
    """Solve dv/dt + z.grad(v) = g on the given sample times, v(t_0) = v0"""
    (values,) = advect_arrays(drift, [v0.values], times, [source])
    return ScalarField(v0.grid, values, np.asarray(times, dtype=float))


def advect_stream_frozen(drift: Drift, psi0: StreamFunction, times: np.ndarray) -> StreamFunction:
    """Frozen-in transport of a stream function; circle constants kept exactly"""
    trajectory = advect_scalar(drift, psi0.psi, times)
    values = trajectory.values
    values[:, 0, :] = psi0.boundary_values[0]
    values[:, -1, :] = psi0.boundary_values[1]
    return StreamFunction(trajectory.with_values(values), psi0.boundary_values)


def induction_evolve(
    drift: Drift,
    H0: VectorField,
    times: np.ndarray,
    source: Optional[Callable[[float], VectorField]] = None,
) -> VectorField:
    """Solve dH/dt + (V.grad)H - (H.grad)V = g componentwise.

    The stretch term (H.grad)V + g is integrated with Heun's rule along the
    characteristic: evaluated at the departure point at t_n and at the
    arrival node for a predicted H at t_{n+1}.
    """
    grid = H0.grid
    times = np.asarray(times, dtype=float)

    def stretch(H: VectorField, t: float) -> VectorField:
        term = advective(H, drift.on_grid(t))
        if source is not None:
            term = term + source(t)
        return term

    xs = [np.array(H0.x, dtype=float)]
    ys = [np.array(H0.y, dtype=float)]
    for n in range(len(times) - 1):
        t0, t1 = times[n], times[n + 1]
        dt = t1 - t0
        H = VectorField(grid, xs[-1], ys[-1])
        if not (np.any(H.x) or np.any(H.y)) and source is None:
            xs.append(np.zeros_like(H.x))
            ys.append(np.zeros_like(H.y))
            continue
        _, (dx, dy) = departure_points(drift, t1, t0)
        s0 = stretch(H, t0)
        carried_x = PolarInterpolator(grid, H.x + dt * s0.x)(dx, dy)
        carried_y = PolarInterpolator(grid, H.y + dt * s0.y)(dx, dy)
        predicted = VectorField(grid, carried_x, carried_y)
        s1 = stretch(predicted, t1)
        base_x = PolarInterpolator(grid, H.x + 0.5 * dt * s0.x)(dx, dy)
        base_y = PolarInterpolator(grid, H.y + 0.5 * dt * s0.y)(dx, dy)
        xs.append(base_x + 0.5 * dt * s1.x)
        ys.append(base_y + 0.5 * dt * s1.y)
    return VectorField(grid, np.stack(xs), np.stack(ys), times)
