"""Version 2: regularity corrector that removes B where both partition parts overlap."""

import logging
from typing import Optional

import numpy as np

from app.control.subinterval.base import (
    SubintervalAlgorithm,
    SubintervalInputs,
    SubintervalSolution,
    per_time,
    stream_of,
)
from app.errors import OverlapFailureError
from app.fields.base import ScalarField, StreamFunction
from app.fields.operators import advective, directional, grad_perp
from app.geometry.profiles import smooth_step
from app.transport.advection import advect_stream_frozen
from app.transport.flow import SampledDrift
from app.transport.support import SupportRegion, distance_to_mask

logger = logging.getLogger(__name__)


class RegularityCorrector(SubintervalAlgorithm):
    """Evolve H1 and H2 separately and subtract a corrector where they overlap.

    theta1, theta2 are the frozen-in stream functions of the split initial
    field. On the region M where both are alive at the end of the window the
    corrector a = sigma (beta theta1 + theta2) chi removes the combined field,
    so B = grad_perp((beta theta1 + theta2)(1 - sigma chi)).
    """

    def __init__(
        self,
        residual_tol: Optional[float] = None,
        frozen_in_tol: Optional[float] = None,
        corrector: bool = True,
    ):
        super().__init__("regularity corrector", residual_tol, frozen_in_tol)
        self.corrector = corrector

    def overlap_region(self, theta1: np.ndarray, theta2: np.ndarray, inputs: SubintervalInputs) -> SupportRegion:
        """Nodes where both parts are nonzero during the cutoff window"""
        profile = inputs.profile
        grid = inputs.V.grid
        window = inputs.times >= profile.period - 2.0 * profile.K0
        reference = max(float(np.max(np.abs(inputs.psi.psi.values[0]))), 1e-300)
        first = SupportRegion.from_field(ScalarField(grid, theta1[window]), reference=reference)
        second = SupportRegion.from_field(ScalarField(grid, theta2[window]), reference=reference)
        return SupportRegion(grid, first.mask & second.mask)

    def distance_cutoff(self, region: SupportRegion, inputs: SubintervalInputs) -> np.ndarray:
        """chi = 1 within nu0/2 of the overlap, 0 beyond nu0 (at least one and two cells)"""
        grid = region.grid
        nu0 = inputs.profile.nu0
        nu0 = nu0 if np.isfinite(nu0) else 0.0
        inner = max(0.5 * nu0, grid.spacing)
        outer = max(nu0, 2.0 * grid.spacing)
        if region.is_empty:
            return np.zeros(grid.shape)
        distance = np.minimum(distance_to_mask(grid, region.mask), 2.0 * outer)
        return smooth_step(inner, outer, descending=True)(distance)

    def assemble(self, inputs: SubintervalInputs) -> SubintervalSolution:
        profile = inputs.profile
        layout = inputs.layout
        grid = inputs.V.grid
        times = inputs.times
        V = inputs.V
        cut = self.cutoffs(profile, times)
        beta = per_time(cut["beta"])
        beta_dot = per_time(cut["beta_dot"])
        sigma = per_time(cut["sigma"]) if self.corrector else np.zeros((len(times), 1, 1))
        sigma_dot = per_time(cut["sigma_dot"]) if self.corrector else np.zeros((len(times), 1, 1))

        inputs.psi.require_zero_boundary()
        psi0 = inputs.psi.psi.values[0]
        drift = SampledDrift(V, profile.rk_substeps)
        thetas = []
        for mu in (layout.mu1, layout.mu2):
            start = StreamFunction(ScalarField(grid, mu * psi0), (0.0, 0.0))
            thetas.append(advect_stream_frozen(drift, start, times).psi.values)
        theta1, theta2 = thetas
        H1 = grad_perp(stream_of(inputs, theta1), "local")
        H2 = grad_perp(stream_of(inputs, theta2), "local")

        region = self.overlap_region(theta1, theta2, inputs)
        chi = self.distance_cutoff(region, inputs)
        leak = (chi > 0.0) & ~layout.omega_mask
        if np.any(leak):
            raise OverlapFailureError(f"corrector region reaches {int(np.sum(leak))} nodes outside omega")

        combined = beta * theta1 + theta2
        a = sigma * combined * chi
        B = grad_perp(stream_of(inputs, combined - a), "local")
        A = grad_perp(stream_of(inputs, a), "local")
        V_chi = directional(V, chi, "local")
        phi = beta_dot * theta1 - sigma_dot * combined * chi - sigma * beta_dot * theta1 * chi - sigma * combined * V_chi
        eta = grad_perp(stream_of(inputs, phi), "local")

        H = H1 + H2
        xi = inputs.Xi + advective(H, H, "local") - advective(B, B, "local")

        core = SupportRegion(grid, chi == 1.0).erode(grid.spacing).mask
        full = cut["sigma"] == 1.0 if self.corrector else np.zeros(len(times), dtype=bool)
        target = H1 * cut["beta"] + H2
        core_mismatch = 0.0
        if np.any(core) and np.any(full):
            core_mismatch = float(np.max((A - target).magnitude()[full][:, core]))

        logger.debug(
            "Regularity corrector: overlap fraction %.3f, |A|=%.3e, |eta|=%.3e",
            region.area_fraction(),
            A.sup(),
            eta.sup(),
        )
        return SubintervalSolution(
            u=V,
            B=B,
            p=inputs.P,
            xi=xi,
            eta=eta,
            phi=stream_of(inputs, phi),
            psi_end=(combined - a)[-1],
            H1=H1,
            H2=H2,
            diagnostics={
                "version": 2,
                "overlap_fraction": region.area_fraction(),
                "corrector_sup": A.sup(),
                "corrector_core_mismatch": core_mismatch,
                "split_mismatch": float(np.max(np.abs(theta1 + theta2 - inputs.psi.psi.values))),
            },
        )
