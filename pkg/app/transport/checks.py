"""Flushing, dragging and Gronwall checks on flow maps"""

from __future__ import annotations

import logging
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from app.geometry.layout import ControlLayout
from app.transport.flow import Drift, FlowMap, integrate_points

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def unwrapped_offsets(flow: FlowMap, sigma_angle: float) -> np.ndarray:
    """Continuous angle from Sigma along each trajectory, shape (n_times, nr, ntheta)"""
    angles = np.arctan2(flow.y, flow.x)
    unwrapped = np.unwrap(angles, axis=0)
    start = np.mod(angles[0] - sigma_angle, TWO_PI)
    return start[None] + (unwrapped - unwrapped[0][None])


def crossing_times(flow: FlowMap, sigma_angle: float, count: int = 1) -> np.ndarray:
    """First ``count`` times each trajectory crosses the cut (NaN when missing).

    A crossing is a change of the winding index floor(offset / 2 pi); the
    time is interpolated linearly between recorded samples.
    """
    offsets = unwrapped_offsets(flow, sigma_angle)
    winding = np.floor(offsets / TWO_PI)
    times = flow.target_times
    result = np.full((count,) + flow.grid.shape, np.nan)
    found = np.zeros(flow.grid.shape, dtype=int)
    for k in range(1, len(times)):
        changed = winding[k] != winding[k - 1]
        if not np.any(changed):
            continue
        level = np.where(winding[k] > winding[k - 1], winding[k], winding[k - 1]) * TWO_PI
        a, b = offsets[k - 1], offsets[k]
        span = np.where(b != a, b - a, 1.0)
        frac = np.clip((level - a) / span, 0.0, 1.0)
        t_cross = times[k - 1] + frac * (times[k] - times[k - 1])
        for slot in range(count):
            take = changed & (found == slot)
            result[slot][take] = t_cross[take]
        found = found + changed
    return result


def verify_flushing(flow: FlowMap, layout: ControlLayout, window: Tuple[float, float] = (0.0, 1.0)) -> Dict:
    """Crossing-time table for every node and the overall verdict"""
    grid = flow.grid
    candidates = crossing_times(flow, layout.sigma_angle, count=3)
    # Nodes sitting on the cut at the window start only count a later passage
    valid = (candidates > window[0]) & (candidates < window[1])
    first = np.min(np.where(valid, candidates, np.inf), axis=0)
    crossed = np.isfinite(first)
    first = np.where(crossed, first, np.nan)
    table = pd.DataFrame(
        {
            "node": np.arange(grid.n_radial * grid.n_angular),
            "r": grid.R.ravel(),
            "theta": grid.TH.ravel(),
            "crossed": crossed.ravel(),
            "t_cross": first.ravel(),
        }
    )
    failed = table.loc[~table["crossed"], "node"].tolist()
    if failed:
        logger.info("Flushing check: %d of %d nodes never cross the cut", len(failed), len(table))
    slowest = table.loc[table["t_cross"].idxmax()] if table["crossed"].any() else None
    return {
        "passed": not failed,
        "table": table,
        "failed_nodes": failed,
        "latest_crossing": float(np.nanmax(first)) if np.any(~np.isnan(first)) else float("nan"),
        "slowest_radius": float(slowest["r"]) if slowest is not None else float("nan"),
    }


def verify_dragging(flow: FlowMap, subintervals: Sequence[Tuple[float, float]], bound: float) -> Dict:
    """Largest chord between positions of one trajectory inside each subinterval"""
    grid = flow.grid
    times = flow.target_times
    worst = np.zeros(grid.shape)
    rows: List[Dict] = []
    for j, (a, b) in enumerate(subintervals):
        pick = (times >= a - 1e-12) & (times <= b + 1e-12)
        xs, ys = flow.x[pick], flow.y[pick]
        span = np.zeros(grid.shape)
        for i in range(len(xs)):
            for k in range(i + 1, len(xs)):
                span = np.maximum(span, np.hypot(xs[i] - xs[k], ys[i] - ys[k]))
        worst = np.maximum(worst, span)
        rows.append({"subinterval": j, "a": a, "b": b, "max_displacement": float(np.max(span))})
    table = pd.DataFrame(rows)
    measured = float(np.max(worst)) if worst.size else 0.0
    return {
        "passed": bool(measured < bound),
        "max_displacement": measured,
        "bound": bound,
        "margin": (bound - measured) / bound if bound > 0 else float("-inf"),
        "node_pass": worst < bound,
        "table": table,
    }


def gronwall_bound(deviation: float, lipschitz: float, horizon: float, integrated_lipschitz: float = None) -> float:
    """|t - s| * deviation * exp(|t - s| * L); an integrated Lipschitz constant replaces |t - s| * L"""
    if deviation < 0 or lipschitz < 0 or horizon < 0:
        raise ValueError("Gronwall inputs must be nonnegative")
    exponent = horizon * lipschitz if integrated_lipschitz is None else integrated_lipschitz
    return horizon * deviation * float(np.exp(exponent))


def flow_deviation(reference: Drift, perturbed: Drift, s: float, t: float) -> float:
    """Max distance between the two flow maps from s to t over all nodes"""
    grid = reference.grid
    xa, ya, _ = integrate_points(reference, grid.X, grid.Y, s, [t])
    xb, yb, _ = integrate_points(perturbed, grid.X, grid.Y, s, [t])
    return float(np.max(np.hypot(xa[-1] - xb[-1], ya[-1] - yb[-1])))


def gronwall_check(
    reference: Drift,
    perturbed: Drift,
    pairs: Iterable[Tuple[float, float]],
    deviation: float,
    lipschitz: float,
    integrated_lipschitz: float = None,
) -> pd.DataFrame:
    """Measured flow deviation against the Gronwall bound for each (s, t) pair"""
    rows = []
    for s, t in pairs:
        measured = flow_deviation(reference, perturbed, s, t)
        horizon = abs(t - s)
        bound = gronwall_bound(deviation, lipschitz, horizon, integrated_lipschitz)
        rows.append({"s": s, "t": t, "measured": measured, "bound": bound, "pass": measured <= bound})
    return pd.DataFrame(rows)


def separation_check(
    flow: FlowMap, checkpoints: Sequence[float], min_initial: float, min_final: float, seed: int = 0, pairs: int = 4096
) -> Dict:
    """Sampled node pairs at least min_initial apart stay min_final apart at each checkpoint"""
    grid = flow.grid
    rng = np.random.default_rng(seed)
    n = grid.n_radial * grid.n_angular
    i = rng.integers(0, n, pairs)
    j = rng.integers(0, n, pairs)
    x0, y0 = grid.X.ravel(), grid.Y.ravel()
    far = np.hypot(x0[i] - x0[j], y0[i] - y0[j]) >= min_initial
    worst = float("inf")
    for t in checkpoints:
        x, y = flow.at(t)
        x, y = x.ravel(), y.ravel()
        d = np.hypot(x[i] - x[j], y[i] - y[j])[far]
        if d.size:
            worst = min(worst, float(np.min(d)))
    return {"passed": worst >= min_final, "min_separation": worst, "pairs": int(np.sum(far))}
