"""Return-method null control around the flushing profile.

The Elsasser pair is found as the fixed point of

    z~ -> z = reconstruct(j+-, aleph + lambda <y_base, Q>)

where j+- are transported by z~-+ with the vorticity sources G+-
(``mhd`` mode) or are both the controlled vorticity w driven to zero by
``vorticity_control`` (``euler-null`` mode, zero magnetic field).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.control.elsasser import ElsasserPair, elsasser_convert, elsasser_inverse, gpm_source
from app.control.vorticity import vorticity_control
from app.errors import (
    CohomologyViolationError,
    LadderViolationError,
    NoContractionError,
    TubeViolationError,
)
from app.fields.base import ScalarField, VectorField
from app.fields.cohomology import CohomologyBasis, cohomology_basis, div_curl_reconstruct
from app.fields.norms import holder_norm, l2_norm
from app.fields.operators import curl2
from app.fields.poisson import poisson_dirichlet
from app.geometry.profiles import SmoothProfile1D, smooth_step
from app.profile.flushing import FlushingProfile
from app.transport.advection import advect_arrays, sampled_source
from app.transport.flow import SampledDrift, drift_deviation, sample_times

logger = logging.getLogger(__name__)

Mode = Literal["mhd", "euler-null"]

DEFAULT_WEIGHT_EXPONENT = 32


def tube_weight(t, k: int = DEFAULT_WEIGHT_EXPONENT):
    """W_k(t) = (1/2 + t/8)^(-k)"""
    return (0.5 + np.asarray(t, dtype=float) / 8.0) ** (-k)


@dataclass
class ReturnMethodConfig:
    """Fixed-point iteration settings.

    The tube radius, the smallness ladder and the drift radius come from
    existence arguments; they are always measured and only raise when the
    matching ``enforce_*`` flag is set.
    """

    mode: Mode = "mhd"
    k: int = DEFAULT_WEIGHT_EXPONENT
    delta_star: Optional[float] = None
    delta_ladder: Tuple[float, ...] = ()
    max_iters: int = 8
    contraction_tol: float = 1e-6
    horizon: float = 1.0
    samples_per_period: Optional[int] = None
    norm_stride: int = 4
    annihilation_rtol: float = 1e-2
    cohomology_rtol: float = 1e-3
    enforce_tube: bool = False
    enforce_ladder: bool = False
    enforce_drift: bool = False

    def __post_init__(self):
        if self.mode not in ("mhd", "euler-null"):
            raise ValueError(f"unknown mode: {self.mode}")
        if self.k < 1:
            raise ValueError("weight exponent k must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.samples_per_period is not None and self.samples_per_period < 2:
            raise ValueError("samples_per_period must be >= 2")
        ladder = np.asarray(self.delta_ladder, dtype=float)
        if ladder.size and (np.any(ladder <= 0.0) or np.any(np.diff(ladder) <= 0.0)):
            raise ValueError("delta ladder must be positive and strictly increasing")

    def aleph(self, profile: FlushingProfile) -> SmoothProfile1D:
        """Cohomology schedule shape: 1 up to 1/(3K), 0 from 1/(2K)"""
        return smooth_step(profile.period / 3.0, profile.period / 2.0, descending=True)


@dataclass
class ReturnMethodResult:
    V: VectorField
    H: VectorField
    pair: ElsasserPair
    f: ScalarField
    w: Optional[ScalarField]
    aleph: np.ndarray
    times: np.ndarray
    log: pd.DataFrame
    magnetic_stream: ScalarField
    converged: bool
    annihilation: Dict = field(default_factory=dict)


def _series(field_: VectorField, times: np.ndarray) -> VectorField:
    n = len(times)
    return VectorField(
        field_.grid,
        np.broadcast_to(field_.x, (n,) + field_.grid.shape).copy(),
        np.broadcast_to(field_.y, (n,) + field_.grid.shape).copy(),
        times,
    )


def seed_pair(z0: ElsasserPair, profile: FlushingProfile, times: np.ndarray) -> ElsasserPair:
    """lambda0(t) z+-_0 + y*(t)"""
    y = profile.velocity_series(times)
    lam0 = profile.cutoff_lambda0()(times)
    return ElsasserPair(_series(z0.z_plus, times) * lam0 + y, _series(z0.z_minus, times) * lam0 + y)


def cohomology_schedule(
    V0: VectorField, profile: FlushingProfile, cfg: ReturnMethodConfig, basis: CohomologyBasis, times: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """aleph(t) and the full projection aleph + lambda <y_base, Q>"""
    aleph = basis.project(V0) * cfg.aleph(profile)(times)
    flushing = np.asarray(profile.lam(times), dtype=float) * basis.project(profile.y_base)
    return aleph, aleph + flushing


def tube_margin(pair: ElsasserPair, y: VectorField, k: int) -> float:
    """max_t W_k(t)/W_k(0) |z+- - y*|_sup"""
    times = y.times
    weight = tube_weight(times - times[0], k) / tube_weight(0.0, k)
    worst = 0.0
    for z in (pair.z_plus, pair.z_minus):
        deviation = np.max((z - y).magnitude(), axis=(-2, -1))
        worst = max(worst, float(np.max(weight * deviation)))
    return worst


def y_norm_difference(a: ElsasserPair, b: ElsasserPair, stride: int) -> float:
    """C^{1,1/2} surrogate of z_new - z_old over every ``stride``-th sample"""
    worst = 0.0
    for za, zb in ((a.z_plus, b.z_plus), (a.z_minus, b.z_minus)):
        diff = za - zb
        sub = VectorField(diff.grid, diff.x[::stride], diff.y[::stride], diff.times[::stride])
        worst = max(worst, holder_norm(sub, m=1, alpha=0.5))
    return worst


def fixed_point_step(
    z_tilde: ElsasserPair,
    z0: ElsasserPair,
    profile: FlushingProfile,
    cfg: ReturnMethodConfig,
    basis: CohomologyBasis,
    times: np.ndarray,
) -> Dict:
    """One application of the fixed-point map.

    Returns the new pair, the vorticity control f (zero in ``mhd`` mode),
    the controlled vorticity w (``euler-null`` only) and the schedule.
    """
    grid = profile.grid
    V0, _ = elsasser_inverse(z0)
    aleph, projection = cohomology_schedule(V0, profile, cfg, basis, times)
    rk = profile.rk_substeps
    w = None

    if cfg.mode == "mhd":
        drift_plus = SampledDrift(z_tilde.z_minus, rk)
        drift_minus = SampledDrift(z_tilde.z_plus, rk)
        G_plus, G_minus = gpm_source(z_tilde.z_plus, z_tilde.z_minus)
        (j_plus,) = advect_arrays(
            drift_plus, [curl2(z0.z_plus).values], times, [sampled_source(G_plus.values, times)]
        )
        (j_minus,) = advect_arrays(
            drift_minus, [curl2(z0.z_minus).values], times, [sampled_source(G_minus.values, times)]
        )
        f = ScalarField.zeros(grid, times)
    else:
        mean = (z_tilde.z_plus + z_tilde.z_minus) * 0.5
        drift = SampledDrift(mean, rk)
        _check_drift(drift, profile, cfg, times)
        controlled = vorticity_control(
            drift,
            curl2(V0),
            profile.layout,
            times,
            halfwidth=profile.gamma_halfwidth(),
            bin_width=profile.gamma_halfwidth(),
        )
        w = controlled["w"]
        f = controlled["f"]
        j_plus = j_minus = w.values

    z_plus = div_curl_reconstruct(ScalarField(grid, j_plus, times), projection, basis)
    z_minus = div_curl_reconstruct(ScalarField(grid, j_minus, times), projection, basis)
    return {
        "pair": ElsasserPair(z_plus, z_minus),
        "f": f,
        "w": w,
        "aleph": aleph,
        "magnetic_vorticity": ScalarField(grid, 0.5 * (j_plus - j_minus), times),
    }


def _check_drift(drift: SampledDrift, profile: FlushingProfile, cfg: ReturnMethodConfig, times: np.ndarray) -> None:
    if not np.isfinite(profile.nu):
        return
    deviation = drift_deviation(drift, profile.drift(), times)
    if deviation <= profile.nu:
        return
    message = f"drift deviates from y* by {deviation:.3e} > nu = {profile.nu:.3e}"
    if cfg.enforce_drift:
        raise TubeViolationError(message)
    logger.warning(message)


def _check_cohomology(H0: VectorField, basis: CohomologyBasis, rtol: float) -> float:
    projection = float(basis.project(H0))
    if abs(projection) > rtol * l2_norm(H0) + 1e-12:
        raise CohomologyViolationError(f"<H0, Q> = {projection:.3e} is not zero")
    return projection


def _check_ladder(size: float, ladder: Sequence[float], enforce: bool) -> None:
    if not ladder or size < ladder[0]:
        return
    message = f"data size {size:.3e} is not below delta_0 = {ladder[0]:.3e}"
    if enforce:
        raise LadderViolationError(message)
    logger.warning(message)


def run_return_method(
    V0: VectorField,
    H0: VectorField,
    profile: FlushingProfile,
    cfg: Optional[ReturnMethodConfig] = None,
    basis: Optional[CohomologyBasis] = None,
) -> ReturnMethodResult:
    """Iterate the fixed-point map from the seed until the iterates settle"""
    cfg = ReturnMethodConfig() if cfg is None else cfg
    grid = profile.grid
    basis = cohomology_basis(grid) if basis is None else basis
    spp = profile.samples_per_period if cfg.samples_per_period is None else cfg.samples_per_period
    times = sample_times(0.0, cfg.horizon, profile.K, spp)

    _check_cohomology(H0, basis, cfg.cohomology_rtol)
    data_size = V0.sup() + H0.sup()
    _check_ladder(data_size, cfg.delta_ladder, cfg.enforce_ladder)
    if cfg.mode == "euler-null" and H0.sup() > 0.0:
        raise ValueError("euler-null mode needs H0 = 0")

    delta_star = cfg.delta_star
    if delta_star is None:
        delta_star = profile.nu / (3.0 * profile.layout.c_star) if np.isfinite(profile.nu) else np.inf

    z0 = elsasser_convert(V0, H0)
    y = profile.velocity_series(times)
    current = seed_pair(z0, profile, times)
    tolerance = cfg.contraction_tol * max(data_size, 1e-300) + 1e-12

    rows = []
    ratios_failed = 0
    previous_diff = None
    converged = False
    step = None
    for iteration in range(1, cfg.max_iters + 1):
        step = fixed_point_step(current, z0, profile, cfg, basis, times)
        new = step["pair"]
        diff = y_norm_difference(new, current, cfg.norm_stride)
        margin = tube_margin(new, y, cfg.k)
        ratio = diff / previous_diff if previous_diff else float("nan")
        rows.append(
            {
                "iteration": iteration,
                "y_norm_difference": diff,
                "ratio": ratio,
                "tube_margin": margin,
                "delta_star": delta_star,
                "aleph_0": float(step["aleph"][0]),
            }
        )
        logger.info(
            "Fixed-point iteration %d (%s): Y-difference %.3e, ratio %.3g, tube %.3e",
            iteration,
            cfg.mode,
            diff,
            ratio,
            margin,
        )
        if margin >= delta_star:
            message = f"iterate left the tube: weighted deviation {margin:.3e} >= {delta_star:.3e}"
            if cfg.enforce_tube:
                raise TubeViolationError(message)
            logger.warning(message)
        current = new
        if diff <= tolerance:
            converged = True
            break
        if iteration > 2 and ratio >= 1.0:
            ratios_failed += 1
            if ratios_failed >= 2:
                raise NoContractionError(
                    f"Y-norm differences stopped decreasing at iteration {iteration} (ratio {ratio:.3g})"
                )
        previous_diff = diff

    if not converged:
        logger.warning("Fixed-point budget of %d iterations exhausted", cfg.max_iters)

    V, H = elsasser_inverse(current)
    annihilation = {}
    if cfg.mode == "euler-null":
        final = float(np.max(V.magnitude()[-1]))
        threshold = cfg.annihilation_rtol * V0.sup() + 1e-12
        annihilation = {"final_sup": final, "threshold": threshold, "passed": final <= threshold}
        log_level = logging.INFO if annihilation["passed"] else logging.WARNING
        logger.log(log_level, "Euler null control: |V(end)| = %.3e (threshold %.3e)", final, threshold)

    return ReturnMethodResult(
        V=V,
        H=H,
        pair=current,
        f=step["f"],
        w=step["w"],
        aleph=step["aleph"],
        times=times,
        log=pd.DataFrame(rows),
        magnetic_stream=poisson_dirichlet(step["magnetic_vorticity"], 0.0, 0.0),
        converged=converged,
        annihilation=annihilation,
    )
