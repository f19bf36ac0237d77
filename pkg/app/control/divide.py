"""Divide-and-control: K sub-interval magnetic annihilation steps, then Euler null control.

Each sub-interval [l/K, (l+1)/K] runs the return method from the current
state, assembles Xi and cuts the magnetic field near the cut Lambda. The
region where B is known to vanish is carried along by the flow and grows
by a neighbourhood of Lambda every step; after K steps it covers the
annulus. The remaining velocity is steered to rest on [1, 2].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from app.control.gluing import GlobalSolution, TrajectorySegment
from app.control.pieces import Lift, assemble_Xi
from app.control.return_method import ReturnMethodConfig, ReturnMethodResult, run_return_method
from app.control.subinterval import ALGORITHMS, SubintervalInputs, SubintervalSolution
from app.errors import AnnihilationFailureError, LadderViolationError
from app.fields.base import ScalarField, StreamFunction, VectorField
from app.fields.cohomology import CohomologyBasis, cohomology_basis
from app.fields.operators import grad_perp
from app.geometry.grid import AnnulusGeometry
from app.geometry.layout import ControlLayout
from app.profile.flushing import FlushingProfile
from app.transport.flow import Drift, SampledDrift, integrate_flow
from app.transport.support import SupportRegion, boundary_connected, pullback

logger = logging.getLogger(__name__)

Version = Literal["v1", "v2"]


def _default_mhd() -> ReturnMethodConfig:
    return ReturnMethodConfig(mode="mhd", max_iters=4, contraction_tol=1e-4)


def _default_euler() -> ReturnMethodConfig:
    return ReturnMethodConfig(mode="euler-null", max_iters=4, contraction_tol=1e-4)


@dataclass
class DivideConfig:
    """Settings of the divide-and-control run"""

    version: Version = "v1"
    subinterval_samples: int = 64
    mhd: ReturnMethodConfig = field(default_factory=_default_mhd)
    euler: ReturnMethodConfig = field(default_factory=_default_euler)
    lift: Lift = "global"
    residual_rel_tol: Optional[float] = None
    frozen_in_tol: Optional[float] = None
    annihilation_rtol: float = 1e-6
    floor_factor: float = 5.0
    max_steps: Optional[int] = None
    delta_ladder: Tuple[float, ...] = ()
    enforce_ladder: bool = False
    enforce_annihilation: bool = True
    euler_phase: bool = True

    def __post_init__(self):
        if self.version not in ALGORITHMS:
            raise ValueError(f"unknown sub-interval version: {self.version}")
        if self.subinterval_samples < 8:
            raise ValueError("subinterval_samples must be >= 8 to resolve the cutoffs")
        if self.max_steps is not None and self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")


@dataclass
class DivideResult:
    solution: GlobalSolution
    log: pd.DataFrame
    zero_fractions: List[float]
    annihilation: Dict
    euler: Optional[ReturnMethodResult] = None
    subintervals: List[SubintervalSolution] = field(default_factory=list)
    final: Dict = field(default_factory=dict)


def annihilation_threshold(reference: float, grid: AnnulusGeometry, rtol: float, floor_factor: float) -> float:
    """rtol |B0| plus an interpolation floor of order h^2"""
    return reference * (rtol + floor_factor * grid.spacing**2) + 1e-300


def verify_annihilation(B_end: VectorField, layout: ControlLayout, threshold: float) -> Dict:
    """sup |B(., 1/K)| over the d_lambda/2 neighbourhood of Lambda"""
    neighbourhood = layout.lambda_neighbourhood(0.5 * layout.d_lambda)
    measured = float(np.max(B_end.magnitude()[neighbourhood])) if np.any(neighbourhood) else 0.0
    return {
        "passed": measured <= threshold,
        "measured": measured,
        "threshold": threshold,
        "margin": threshold - measured,
    }


def verify_local_flush(
    B0: VectorField,
    solution: SubintervalSolution,
    profile: FlushingProfile,
    threshold: float,
    drift: Optional[Drift] = None,
) -> Dict:
    """Certify B(S, 1/K) = 0 on the boundary-connected set S swept clean by the flow.

    A node is in S when B0 vanishes on the 2 nu0-ball around its preimage
    under the flow over the sub-interval (the flushing flow unless a drift
    is given).
    """
    grid = B0.grid
    t0, t1 = float(solution.times[0]), float(solution.times[-1])
    support = SupportRegion.from_field(B0)
    if support.is_empty:
        clean = np.ones(grid.shape, dtype=bool)
    else:
        drift = profile.drift() if drift is None else drift
        flow = integrate_flow(drift, t1, t0)
        x, y = flow.end
        radius = 2.0 * profile.nu0 if np.isfinite(profile.nu0) else 0.0
        tree = cKDTree(np.column_stack([grid.X[support.mask], grid.Y[support.mask]]))
        distance, _ = tree.query(np.column_stack([x.ravel(), y.ravel()]))
        # nearest-node distance undercounts by up to half a cell
        clean = (distance > radius + 0.5 * grid.spacing).reshape(grid.shape)
    S = boundary_connected(clean)
    B_end = solution.B.at(-1)
    measured = float(np.max(B_end.magnitude()[S])) if np.any(S) else 0.0
    return {
        "passed": measured <= threshold,
        "measured": measured,
        "threshold": threshold,
        "set_fraction": SupportRegion(grid, S).area_fraction(),
    }


def _segment(label: str, phase: str, u, B, p, xi, eta) -> TrajectorySegment:
    return TrajectorySegment(label, phase, u, B, p, xi, eta)


def _shift(F, offset: float):
    return replace(F, times=F.times + offset)


def _pieces_segment(label: str, phase: str, rm: ReturnMethodResult, pieces, offset: float) -> TrajectorySegment:
    zero = VectorField.zeros(rm.V.grid, rm.times)
    return _segment(
        label,
        phase,
        _shift(rm.V, offset),
        _shift(rm.H, offset),
        _shift(pieces.P, offset),
        _shift(pieces.Xi, offset),
        _shift(zero, offset),
    )


class ZeroRegionTracker:
    """Certified-zero region of B: carried by the flow, grown by the Lambda neighbourhood"""

    def __init__(self, B0: VectorField, layout: ControlLayout, nu0: float):
        self.grid = B0.grid
        self.layout = layout
        self.nu0 = nu0 if np.isfinite(nu0) else 0.0
        self.region = SupportRegion(self.grid, ~SupportRegion.from_field(B0).mask)
        self.history = [self.region.area_fraction()]

    def advance(self, V: VectorField, rk_substeps: int) -> SupportRegion:
        times = V.times
        drift = SampledDrift(V, rk_substeps)
        back = integrate_flow(drift, times[-1], times[0])
        x, y = back.end
        carried = pullback(self.region.erode(self.nu0), x, y)
        cleaned = SupportRegion(self.grid, self.layout.lambda_neighbourhood(0.5 * self.layout.d_lambda))
        self.region = carried.union(cleaned)
        self.history.append(self.region.area_fraction())
        return self.region


def _check_ladder(step: int, size: float, ladder, enforce: bool) -> float:
    if len(ladder) <= step + 1:
        return float("nan")
    bound = ladder[step + 1]
    if size >= bound:
        message = f"step {step}: endpoint size {size:.3e} exceeds delta_{step + 1} = {bound:.3e}"
        if enforce:
            raise LadderViolationError(message)
        logger.warning(message)
    return bound - size


def run_divide_and_control(
    u0: VectorField,
    B0: VectorField,
    profile: FlushingProfile,
    cfg: Optional[DivideConfig] = None,
    basis: Optional[CohomologyBasis] = None,
) -> DivideResult:
    """Annihilate B0 in K sub-steps on [0, 1], then drive u to rest on [1, 2]"""
    cfg = DivideConfig() if cfg is None else cfg
    grid = profile.grid
    layout = profile.layout
    basis = cohomology_basis(grid) if basis is None else basis
    K = profile.K
    algorithm = ALGORITHMS[cfg.version](residual_tol=cfg.residual_rel_tol, frozen_in_tol=cfg.frozen_in_tol)
    sub_cfg = replace(cfg.mhd, mode="mhd", horizon=profile.period, samples_per_period=cfg.subinterval_samples)

    B_scale = B0.sup()
    threshold = annihilation_threshold(B_scale, grid, cfg.annihilation_rtol, cfg.floor_factor)
    projection0 = float(basis.project(B0))
    tracker = ZeroRegionTracker(B0, layout, profile.nu0)
    steps = K if cfg.max_steps is None else min(K, cfg.max_steps)

    segments: List[TrajectorySegment] = []
    subintervals: List[SubintervalSolution] = []
    rows = []
    u = u0
    B = B0
    t_end = 0.0
    if B_scale == 0.0:
        # No magnetic field: free evolution along y* over [0, 1]
        free_cfg = replace(cfg.mhd, mode="mhd", horizon=1.0)
        rm = run_return_method(u0, B0, profile, free_cfg, basis)
        pieces = assemble_Xi(rm.V, rm.H, rm.f, layout, basis, cfg.lift, cfg.residual_rel_tol)
        segments.append(_pieces_segment("free", "magnetic", rm, pieces, 0.0))
        u = rm.V.at(-1)
        B = VectorField.zeros(grid)
        t_end = 1.0
        logger.info("Zero magnetic field: magnetic phase replaced by free evolution")
    else:
        for step in range(steps):
            offset = step * profile.period
            rm = run_return_method(u, B, profile, sub_cfg, basis)
            pieces = assemble_Xi(rm.V, rm.H, rm.f, layout, basis, cfg.lift, cfg.residual_rel_tol)
            psi = StreamFunction(rm.magnetic_stream, (0.0, 0.0))
            inputs = SubintervalInputs(rm.V, rm.H, psi, pieces.P, pieces.Xi, profile, basis)
            local = algorithm.run(inputs)

            B_end = grad_perp(ScalarField(grid, local.psi_end), "local")
            annihilation = verify_annihilation(B_end, layout, threshold)
            flush = verify_local_flush(B, local, profile, threshold, SampledDrift(rm.V, profile.rk_substeps))
            region = tracker.advance(rm.V, profile.rk_substeps)
            measured_zero = float(np.max(B_end.magnitude()[region.mask])) if not region.is_empty else 0.0
            projections = np.atleast_1d(basis.project(local.B))
            u = local.u.at(-1)
            size = u.sup() + B_end.sup()
            ladder_margin = _check_ladder(step, size, cfg.delta_ladder, cfg.enforce_ladder)

            shifted = local.shifted(offset)
            subintervals.append(shifted)
            segments.append(
                _segment(f"step-{step}", "magnetic", shifted.u, shifted.B, shifted.p, shifted.xi, shifted.eta)
            )
            rows.append(
                {
                    "step": step,
                    "t0": offset,
                    "t1": offset + profile.period,
                    "iterations": len(rm.log),
                    "converged": rm.converged,
                    "u_end_sup": u.sup(),
                    "B_end_sup": B_end.sup(),
                    "lambda_clean_sup": annihilation["measured"],
                    "annihilation_passed": annihilation["passed"],
                    "flushed_fraction": flush["set_fraction"],
                    "flushed_sup": flush["measured"],
                    "zero_fraction": region.area_fraction(),
                    "zero_region_sup": measured_zero,
                    "cohomology_drift": float(np.max(np.abs(projections - projection0))),
                    "ladder_margin": ladder_margin,
                    "eta_outside_omega": local.diagnostics.get("eta_outside_omega", float("nan")),
                    "eta_before_window": local.diagnostics.get("eta_before_window", float("nan")),
                    "phi_on_circles": local.diagnostics.get("phi_on_circles", float("nan")),
                    "xi_leak_relative": local.diagnostics.get("xi_leak_relative", float("nan")),
                    "momentum_residual": local.diagnostics.get("momentum_residual", float("nan")),
                    "induction_residual": local.diagnostics.get("induction_residual", float("nan")),
                }
            )
            logger.info(
                "Sub-interval %d/%d: |B(end)|=%.3e, clean near cut %.3e, zero region %.3f",
                step + 1,
                K,
                B_end.sup(),
                annihilation["measured"],
                region.area_fraction(),
            )
            B = B_end
            t_end = offset + profile.period

    complete = B_scale == 0.0 or steps == K
    annihilation = {
        "complete": complete,
        "final_sup": B.sup(),
        "threshold": threshold,
        "passed": complete and B.sup() <= threshold,
        "zero_fraction": tracker.history[-1] if B_scale > 0.0 else 1.0,
    }
    if complete and B_scale > 0.0 and not annihilation["passed"]:
        residual = SupportRegion.from_field(B, reference=B_scale)
        message = (
            f"|B(1)| = {B.sup():.3e} above {threshold:.3e}; "
            f"residual support covers {residual.area_fraction():.3f} of the annulus"
        )
        if cfg.enforce_annihilation:
            raise AnnihilationFailureError(message)
        logger.warning(message)

    euler = None
    final = {}
    if complete and cfg.euler_phase:
        euler_cfg = replace(cfg.euler, mode="euler-null", horizon=1.0)
        euler = run_return_method(u, VectorField.zeros(grid), profile, euler_cfg, basis)
        pieces = assemble_Xi(euler.V, euler.H, euler.f, layout, basis, cfg.lift, cfg.residual_rel_tol)
        segments.append(_pieces_segment("euler", "euler", euler, pieces, t_end))
        final = {
            "u_final_sup": float(np.max(euler.V.magnitude()[-1])),
            "B_final_sup": B.sup(),
            **{f"euler_{k}": v for k, v in euler.annihilation.items()},
        }

    solution = GlobalSolution.from_segments(segments, metadata={"K": K, "version": cfg.version, "steps": steps})
    logger.info(
        "Divide-and-control finished: %d steps, |B|=%.3e, zero region %.3f",
        steps,
        B.sup(),
        annihilation["zero_fraction"],
    )
    return DivideResult(
        solution=solution,
        log=pd.DataFrame(rows),
        zero_fractions=list(tracker.history),
        annihilation=annihilation,
        euler=euler,
        subintervals=subintervals,
        final=final,
    )
