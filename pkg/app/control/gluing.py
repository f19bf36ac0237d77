"""Global trajectories: concatenation, time reversal, scaling and gluing.

A null-controlled run from (eps u0, eps B0) and the time reversal of one
from (-eps uT, -eps BT), both rescaled to windows of length 2 eps, glue
through the zero state into a controlled trajectory from (u0, B0) to
(uT, BT) on [0, T].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.control.pieces import mhd_residual
from app.errors import PhaseMismatchError
from app.fields.base import ScalarField, VectorField

logger = logging.getLogger(__name__)

JOIN_TOLERANCE = 1e-12
MAX_HALVINGS = 60


@dataclass
class TrajectorySegment:
    """One phase of a trajectory with its controls, all on the same times"""

    label: str
    phase: str
    u: VectorField
    B: VectorField
    p: ScalarField
    xi: VectorField
    eta: VectorField

    @property
    def times(self) -> np.ndarray:
        return self.u.times

    def take(self, index) -> "TrajectorySegment":
        times = self.times[index]

        def pick(F):
            if isinstance(F, VectorField):
                return VectorField(F.grid, F.x[index], F.y[index], times)
            return ScalarField(F.grid, F.values[index], times)

        return TrajectorySegment(self.label, self.phase, pick(self.u), pick(self.B), pick(self.p), pick(self.xi), pick(self.eta))


def _stack_vectors(parts: Sequence[VectorField], times: np.ndarray) -> VectorField:
    return VectorField(parts[0].grid, np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]), times)


def _stack_scalars(parts: Sequence[ScalarField], times: np.ndarray) -> ScalarField:
    return ScalarField(parts[0].grid, np.concatenate([p.values for p in parts]), times)


@dataclass
class GlobalSolution:
    """Full controlled trajectory (u, B, p, xi, eta) with per-phase metadata"""

    u: VectorField
    B: VectorField
    p: ScalarField
    xi: VectorField
    eta: VectorField
    phases: pd.DataFrame
    jumps: pd.DataFrame = field(default_factory=pd.DataFrame)
    metadata: Dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.u.times

    @property
    def grid(self):
        return self.u.grid

    @classmethod
    def from_segments(cls, segments: Sequence[TrajectorySegment], metadata: Optional[Dict] = None) -> "GlobalSolution":
        """Concatenate segments; a repeated join sample keeps the earlier segment's value"""
        if not segments:
            raise ValueError("need at least one segment")
        kept: List[TrajectorySegment] = [segments[0]]
        jumps = []
        for previous, current in zip(segments[:-1], segments[1:]):
            t_end = previous.times[-1]
            t_start = current.times[0]
            if t_start < t_end - JOIN_TOLERANCE:
                raise ValueError(f"segment {current.label} starts at {t_start} before {t_end}")
            jumps.append(
                {
                    "time": float(t_start),
                    "before": previous.label,
                    "after": current.label,
                    "u": (previous.u.at(-1) - current.u.at(0)).sup(),
                    "B": (previous.B.at(-1) - current.B.at(0)).sup(),
                    "p": (previous.p.at(-1) - current.p.at(0)).sup(),
                }
            )
            if abs(t_start - t_end) <= JOIN_TOLERANCE:
                current = current.take(slice(1, None))
            if len(current.times):
                kept.append(current)
        times = np.concatenate([s.times for s in kept])
        phases = pd.DataFrame(
            [
                {"label": s.label, "phase": s.phase, "t_start": float(s.times[0]), "t_end": float(s.times[-1])}
                for s in segments
            ]
        )
        return cls(
            u=_stack_vectors([s.u for s in kept], times),
            B=_stack_vectors([s.B for s in kept], times),
            p=_stack_scalars([s.p for s in kept], times),
            xi=_stack_vectors([s.xi for s in kept], times),
            eta=_stack_vectors([s.eta for s in kept], times),
            phases=phases,
            jumps=pd.DataFrame(jumps),
            metadata=dict(metadata or {}),
        )

    def as_segment(self, label: str, phase: str) -> TrajectorySegment:
        return TrajectorySegment(label, phase, self.u, self.B, self.p, self.xi, self.eta)

    def final_state(self):
        return self.u.at(-1), self.B.at(-1)

    def final_norm(self) -> float:
        u, B = self.final_state()
        return u.sup() + B.sup()

    def residual(self) -> Dict[str, np.ndarray]:
        return mhd_residual(self.u, self.B, self.p, self.xi, self.eta)


def _map_times(solution: GlobalSolution, times: np.ndarray, order, velocity_factor: float, control_factor: float) -> GlobalSolution:
    def vec(F: VectorField, factor: float) -> VectorField:
        return VectorField(F.grid, factor * F.x[order], factor * F.y[order], times)

    def sca(F: ScalarField, factor: float) -> ScalarField:
        return ScalarField(F.grid, factor * F.values[order], times)

    return replace(
        solution,
        u=vec(solution.u, velocity_factor),
        B=vec(solution.B, velocity_factor),
        p=sca(solution.p, control_factor),
        xi=vec(solution.xi, control_factor),
        eta=vec(solution.eta, control_factor),
        jumps=pd.DataFrame(),
    )


def time_reverse(solution: GlobalSolution) -> GlobalSolution:
    """u(s) -> -u(t0 + t1 - s), B likewise; p, xi, eta keep their sign"""
    times = solution.times
    reversed_times = (times[0] + times[-1]) - times[::-1]
    result = _map_times(solution, reversed_times, slice(None, None, -1), -1.0, 1.0)
    phases = solution.phases.copy()
    if len(phases):
        t0, t1 = times[0], times[-1]
        phases[["t_start", "t_end"]] = np.column_stack([t0 + t1 - phases["t_end"], t0 + t1 - phases["t_start"]])
        phases = phases.iloc[::-1].reset_index(drop=True)
    return replace(result, phases=phases)


def time_scale(solution: GlobalSolution, eps: float) -> GlobalSolution:
    """u -> u(t / eps) / eps on eps-compressed times, B likewise; p, xi, eta get eps^-2"""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    result = _map_times(solution, eps * solution.times, slice(None), 1.0 / eps, 1.0 / eps**2)
    phases = solution.phases.copy()
    if len(phases):
        phases[["t_start", "t_end"]] = eps * phases[["t_start", "t_end"]]
    return replace(result, phases=phases)


def choose_epsilon(data_size: float, delta0: float, T: float) -> float:
    """Largest eps = min(1, T/4) / 2^n with eps * data_size below delta0"""
    if T <= 0.0:
        raise ValueError("T must be positive")
    eps = min(1.0, T / 4.0)
    if not np.isfinite(delta0) or data_size == 0.0:
        return eps
    for _ in range(MAX_HALVINGS):
        if eps * data_size < delta0:
            return eps
        eps *= 0.5
    raise ValueError(f"no eps brings data of size {data_size:.3e} below {delta0:.3e}")


def zero_segment(grid, t0: float, t1: float, samples: int, label: str = "rest") -> TrajectorySegment:
    times = np.linspace(t0, t1, max(samples, 2))
    zero = VectorField.zeros(grid, times)
    return TrajectorySegment(label, "rest", zero, zero, ScalarField.zeros(grid, times), zero, zero)


def glue_and_scale(
    forward: GlobalSolution,
    backward: Optional[GlobalSolution],
    T: float,
    eps: float,
    null_tolerance: float,
) -> GlobalSolution:
    """Scaled forward run, rest at zero, scaled reversal of the backward run.

    ``backward`` is the null-controlled run from (-eps uT, -eps BT); None
    stands for zero target data.
    """
    if 4.0 * eps > T + JOIN_TOLERANCE:
        raise ValueError(f"eps = {eps} leaves no room in [0, {T}]")
    for name, run in (("forward", forward), ("backward", backward)):
        if run is None:
            continue
        if run.final_norm() > null_tolerance:
            raise PhaseMismatchError(f"{name} reference run ends at {run.final_norm():.3e} > {null_tolerance:.1e}")

    grid = forward.grid
    first = time_scale(forward, eps)
    span = first.times[-1] - first.times[0]
    rest_samples = int(np.ceil((T - 2.0 * span) / max(np.min(np.diff(first.times)), JOIN_TOLERANCE))) + 1
    segments = [first.as_segment("forward", "forward")]
    if backward is None:
        segments.append(zero_segment(grid, first.times[-1], T, rest_samples))
    else:
        last = time_scale(time_reverse(backward), eps)
        shift = T - last.times[-1]
        last = replace(
            last,
            u=replace(last.u, times=last.times + shift),
            B=replace(last.B, times=last.times + shift),
            p=replace(last.p, times=last.times + shift),
            xi=replace(last.xi, times=last.times + shift),
            eta=replace(last.eta, times=last.times + shift),
        )
        if last.times[0] > first.times[-1] + JOIN_TOLERANCE:
            segments.append(zero_segment(grid, first.times[-1], last.times[0], rest_samples))
        segments.append(last.as_segment("backward", "backward"))
    glued = GlobalSolution.from_segments(segments, metadata={"T": T, "eps": eps})
    logger.info(
        "Glued trajectory on [0, %.4g] with eps=%.4g: max state jump %.3e",
        T,
        eps,
        float(glued.jumps[["u", "B"]].to_numpy().max()) if len(glued.jumps) else 0.0,
    )
    return glued
