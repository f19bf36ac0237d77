"""Assembly of the interior control Xi = F + R and the pressure P.

F lifts the vorticity control f to a velocity forcing. The Neumann pressure
P~ absorbs the gradient part of the momentum defect; what is left is a
multiple rho(t) of the harmonic field Q, which R removes away from the cut
through the smoothed angular potential.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Literal, Optional

import numpy as np

from app.control.tolerances import residual_tolerance
from app.errors import ResidualExcessError
from app.fields.base import ScalarField, VectorField
from app.fields.cohomology import CohomologyBasis, cohomology_basis
from app.fields.operators import advective, curl2, divergence, gradient, grad_perp, time_derivative
from app.fields.poisson import poisson_dirichlet, poisson_neumann
from app.geometry.layout import ControlLayout

logger = logging.getLogger(__name__)

Lift = Literal["global", "cutoff"]


@dataclass
class ControlPieces:
    """Control split F + R with its pressure; every field is time-sampled"""

    f: ScalarField
    F_vec: VectorField
    R_vec: VectorField
    rho: np.ndarray
    P_tilde: ScalarField
    h: ScalarField
    P: ScalarField
    Xi: VectorField
    diagnostics: Dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.Xi.times


def lift_vorticity_control(f: ScalarField, layout: ControlLayout, lift: Lift = "global") -> VectorField:
    """Velocity forcing with curl f.

    ``global``: grad_perp of the Dirichlet potential, exact curl.
    ``cutoff``: the same potential multiplied by 1 - chi_hat, supported in
    omega; its curl differs from f where the cutoff varies.
    """
    potential = poisson_dirichlet(f, 0.0, 0.0)
    if lift == "global":
        return grad_perp(potential)
    if lift == "cutoff":
        return grad_perp(potential.with_values(potential.values * (1.0 - layout.chi_hat)))
    raise ValueError(f"unknown lift: {lift}")


def momentum_terms(V: VectorField, H: VectorField) -> VectorField:
    """(V.grad)V - (H.grad)H"""
    return advective(V, V) - advective(H, H)


def _boundary_flux(G: VectorField):
    """G.n on the inner and outer circles, outward normal"""
    radial = G.radial()
    return -radial[..., 0, :], radial[..., -1, :]


def _mask_sup(F: VectorField, mask: np.ndarray) -> float:
    if not np.any(mask):
        return 0.0
    return float(np.max(F.magnitude()[..., mask]))


def assemble_Xi(
    V: VectorField,
    H: VectorField,
    f: ScalarField,
    layout: ControlLayout,
    basis: Optional[CohomologyBasis] = None,
    lift: Lift = "global",
    residual_rel_tol: Optional[float] = None,
) -> ControlPieces:
    """Interior control and pressure for a controlled Euler/MHD trajectory.

    Raises ResidualExcessError when the relative momentum residual exceeds
    ``residual_rel_tol`` (derived from h and dt when None).
    """
    grid = V.grid
    times = V.times
    basis = cohomology_basis(grid) if basis is None else basis

    F = lift_vorticity_control(f, layout, lift)
    transport = momentum_terms(V, H)
    G = F - transport
    P_tilde = poisson_neumann(divergence(G), _boundary_flux(G))

    dV = V.with_components(time_derivative(V.x, times), time_derivative(V.y, times))
    defect = dV + transport + gradient(P_tilde) - F
    rho = np.atleast_1d(basis.project(defect))

    # grad(cut_potential) = grad(theta) = -Q / c away from Lambda
    factor = (-basis.normalization * rho)[:, None, None]
    h = ScalarField(grid, factor * layout.cut_potential[None], times)
    gx, gy = layout.cut_potential_gradient
    R = VectorField(grid, rho[:, None, None] * basis.q.x - factor * gx, rho[:, None, None] * basis.q.y - factor * gy, times)
    P = P_tilde - h
    Xi = F + R

    residual = dV + transport + gradient(P) - Xi
    scale = max(dV.sup(), transport.sup(), gradient(P).sup(), Xi.sup(), 1e-300)
    relative = residual.sup() / scale
    outside = ~layout.omega_mask
    xi_scale = max(Xi.sup(), 1e-300)
    diagnostics = {
        "lift": lift,
        "momentum_residual": residual.sup(),
        "momentum_residual_relative": relative,
        "curl_defect": float(np.max(np.abs(curl2(F).values - f.values)[..., 1:-1, :])),
        "curl_R": float(np.max(np.abs(curl2(R).values[..., 1:-1, :]))),
        "R_outside_omega": _mask_sup(R, outside),
        "xi_leak": _mask_sup(Xi, outside),
        "xi_leak_relative": _mask_sup(Xi, outside) / xi_scale,
        "rho_max": float(np.max(np.abs(rho))),
    }
    logger.info(
        "Xi assembled (%s lift): residual %.3e relative, leak %.3e relative, max|rho| %.3e",
        lift,
        relative,
        diagnostics["xi_leak_relative"],
        diagnostics["rho_max"],
    )
    tolerance = residual_tolerance(grid, times, residual_rel_tol)
    diagnostics["residual_tolerance"] = tolerance
    if relative > tolerance:
        raise ResidualExcessError(
            f"momentum residual {relative:.3e} exceeds tolerance {tolerance:.1e}"
        )
    return ControlPieces(f, F, R, rho, P_tilde, h, P, Xi, diagnostics)


def mhd_residual(
    u: VectorField,
    B: VectorField,
    p: ScalarField,
    xi: VectorField,
    eta: VectorField,
) -> Dict[str, np.ndarray]:
    """Momentum and induction residuals per sample, relative to the largest term"""
    times = u.times
    du = u.with_components(time_derivative(u.x, times), time_derivative(u.y, times))
    dB = B.with_components(time_derivative(B.x, times), time_derivative(B.y, times))
    transport = advective(u, u) - advective(B, B)
    grad_p = gradient(p)
    momentum = du + transport + grad_p - xi
    u_B = advective(u, B)
    B_u = advective(B, u)
    induction = dB + u_B - B_u - eta

    def per_sample(F: VectorField) -> np.ndarray:
        return np.max(F.magnitude(), axis=(-2, -1))

    momentum_scale = np.maximum.reduce([per_sample(t) for t in (du, transport, grad_p, xi)])
    induction_scale = np.maximum.reduce([per_sample(t) for t in (dB, u_B, B_u, eta)])
    return {
        "momentum": per_sample(momentum),
        "induction": per_sample(induction),
        "momentum_relative": per_sample(momentum) / np.maximum(momentum_scale, 1e-300),
        "induction_relative": per_sample(induction) / np.maximum(induction_scale, 1e-300),
    }
