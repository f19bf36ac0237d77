"""Version 1: delete the cut-side part of B with a time cutoff; eta carries the induction defect."""

import logging
from typing import Optional

import numpy as np

from app.control.splitting import eta_hat, eta_hat_potential, frozen_in_residual, split_field
from app.control.subinterval.base import (
    SubintervalAlgorithm,
    SubintervalInputs,
    SubintervalSolution,
    per_time,
    stream_of,
)
from app.fields.operators import advective, grad_perp

logger = logging.getLogger(__name__)


class CutoffSplitting(SubintervalAlgorithm):
    """Delete the Lambda-side part H1 of the magnetic field with the cutoff beta.

    B = beta H1 + H2 follows the flow; the coupling terms lost by cutting
    H1 go into xi, the induction defect into eta = grad_perp(phi) with
    phi = beta' mu1 psi + (beta - 1) psi (V . grad mu1).
    """

    def __init__(
        self,
        residual_tol: Optional[float] = None,
        frozen_in_tol: Optional[float] = None,
    ):
        super().__init__("cutoff splitting", residual_tol, frozen_in_tol)

    def assemble(self, inputs: SubintervalInputs) -> SubintervalSolution:
        layout = inputs.layout
        times = inputs.times
        V = inputs.V
        psi = inputs.psi
        cut = self.cutoffs(inputs.profile, times)
        beta = per_time(cut["beta"])
        beta_dot = per_time(cut["beta_dot"])

        H1, H2 = split_field(psi, layout, "local")
        eta1 = eta_hat(psi, V, layout, 1, "local", self.frozen_in_tol)
        eta2 = eta_hat(psi, V, layout, 2, "local", self.frozen_in_tol)

        B = H1 * cut["beta"] + H2
        eta = H1 * cut["beta_dot"] + eta1 * cut["beta"] + eta2

        phi = beta_dot * layout.mu1 * psi.psi.values + (beta - 1.0) * eta_hat_potential(psi, V, layout, 1).values

        one_minus = 1.0 - cut["beta"]
        coupling = (advective(H1, H2, "local") + advective(H2, H1, "local")) * one_minus
        self_term = advective(H1, H1, "local") * (1.0 - cut["beta"] ** 2)
        xi = inputs.Xi + coupling + self_term

        psi_end = layout.mu2 * psi.psi.values[-1]
        logger.debug(
            "Cutoff splitting: |H1|=%.3e, |H2|=%.3e, |eta|=%.3e",
            H1.sup(),
            H2.sup(),
            eta.sup(),
        )
        return SubintervalSolution(
            u=V,
            B=B,
            p=inputs.P,
            xi=xi,
            eta=eta,
            phi=stream_of(inputs, phi),
            psi_end=psi_end,
            H1=H1,
            H2=H2,
            diagnostics={
                "version": 1,
                "frozen_in_residual": frozen_in_residual(psi, V, "local"),
                "eta_potential_mismatch": float(
                    np.max((grad_perp(stream_of(inputs, phi), "local") - eta).magnitude())
                ),
            },
        )
