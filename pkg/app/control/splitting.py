"""Splitting a magnetic field along the partition mu1 + mu2 = 1.

H = grad_perp(psi) with psi = 0 on both circles splits into
H^j = grad_perp(mu_j psi). When psi is frozen in by V, each part satisfies
the induction equation up to the source

    eta_hat^j = grad_perp(psi (V . grad mu_j)),

which lives where the partition varies and sums to zero over j.
"""

from __future__ import annotations

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from app.control.tolerances import residual_tolerance
from app.errors import FrozenInViolationError
from app.fields.base import ScalarField, StreamFunction, VectorField
from app.fields.operators import Stencil, advective, directional, grad_perp, time_derivative
from app.geometry.layout import ControlLayout

logger = logging.getLogger(__name__)


def partition(layout: ControlLayout, j: int) -> np.ndarray:
    if j == 1:
        return layout.mu1
    if j == 2:
        return layout.mu2
    raise ValueError(f"partition index must be 1 or 2, got {j}")


def partition_gradient(layout: ControlLayout, j: int) -> Tuple[np.ndarray, np.ndarray]:
    gx, gy = layout.mu1_gradient()
    if j == 1:
        return gx, gy
    if j == 2:
        return -gx, -gy
    raise ValueError(f"partition index must be 1 or 2, got {j}")


def split_field(psi: StreamFunction, layout: ControlLayout, stencil: Stencil = "local") -> Tuple[VectorField, VectorField]:
    """(H1, H2) = (grad_perp(mu1 psi), grad_perp(mu2 psi))"""
    psi.require_zero_boundary()
    values = psi.psi.values
    parts = []
    for j in (1, 2):
        parts.append(grad_perp(psi.psi.with_values(partition(layout, j) * values), stencil))
    return parts[0], parts[1]


def frozen_in_residual(psi: StreamFunction, V: VectorField, stencil: Stencil = "local") -> float:
    """|d psi/dt + V.grad psi| relative to |V.grad psi|"""
    values = psi.psi.values
    transport = directional(V, values, stencil)
    residual = time_derivative(values, psi.psi.times) + transport
    scale = max(float(np.max(np.abs(transport))), 1e-300)
    return float(np.max(np.abs(residual[..., 1:-1, :]))) / scale


def eta_hat_potential(psi: StreamFunction, V: VectorField, layout: ControlLayout, j: int) -> ScalarField:
    """psi (V . grad mu_j)"""
    gx, gy = partition_gradient(layout, j)
    return psi.psi.with_values(psi.psi.values * (V.x * gx + V.y * gy))


def eta_hat(
    psi: StreamFunction,
    V: VectorField,
    layout: ControlLayout,
    j: int,
    stencil: Stencil = "local",
    tolerance: Optional[float] = None,
) -> VectorField:
    """Closed-form induction source of H^j for a frozen-in psi.

    The frozen-in residual is gated by ``tolerance``, derived from h and dt
    when None.
    """
    if not np.any(V.x) and not np.any(V.y):
        return VectorField.zeros(V.grid, V.times)
    if psi.psi.is_series and len(psi.psi.times) > 2:
        residual = frozen_in_residual(psi, V, stencil)
        if residual > residual_tolerance(V.grid, psi.psi.times, tolerance):
            raise FrozenInViolationError(f"stream function is not frozen in (residual {residual:.3e})")
    return grad_perp(eta_hat_potential(psi, V, layout, j), stencil)


def eta_hat_direct(H_j: VectorField, V: VectorField, stencil: Stencil = "local") -> VectorField:
    """dH/dt + (V.grad)H - (H.grad)V by finite differences"""
    dH = H_j.with_components(time_derivative(H_j.x, H_j.times), time_derivative(H_j.y, H_j.times))
    return dH + advective(V, H_j, stencil) - advective(H_j, V, stencil)


def compare_eta_hat(
    psi: StreamFunction,
    V: VectorField,
    layout: ControlLayout,
    stencil: Stencil = "local",
    tolerance: Optional[float] = None,
) -> Dict:
    """Closed form against direct evaluation, plus the cancellation of the two parts"""
    H1, H2 = split_field(psi, layout, stencil)
    closed = [eta_hat(psi, V, layout, j, stencil, tolerance) for j in (1, 2)]
    direct = [eta_hat_direct(H, V, stencil) for H in (H1, H2)]
    scale = max(max(c.sup() for c in closed), 1e-300)
    # derivatives at the circles are one-sided; compare on interior rows
    interior = (slice(None), slice(1, -1), slice(None))
    mismatch = max(float(np.max((c - d).magnitude()[interior])) for c, d in zip(closed, direct))
    report = {
        "cancellation": (closed[0] + closed[1]).sup() / scale,
        "mismatch": mismatch,
        "mismatch_relative": mismatch / scale,
        "scale": scale,
    }
    logger.debug("eta_hat check: cancellation %.3e, mismatch %.3e", report["cancellation"], report["mismatch_relative"])
    return report
