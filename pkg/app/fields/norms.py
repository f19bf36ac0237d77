"""Inner products and discrete norm surrogates"""

from __future__ import annotations

from typing import Union

import numpy as np

from app.fields.base import ScalarField, VectorField, check_same_grid
from app.fields.operators import cartesian_gradient

Field = Union[ScalarField, VectorField]

HOLDER_PAIRS = 4096


def inner_product_l2(f: VectorField, g: VectorField):
    """Quadrature of f.g with weights r dr dtheta; one value per time sample for series"""
    check_same_grid(f.grid, g.grid)
    integrand = f.x * g.x + f.y * g.y
    total = np.sum(integrand * f.grid.area_weights, axis=(-2, -1))
    return float(total) if np.ndim(total) == 0 else total


def pairing_l2(f: VectorField, g: VectorField):
    """Like inner_product_l2 but with the summation-by-parts radial weights.

    <grad_perp(psi), grad_perp(ln r)> telescopes to psi(r2) - psi(r1) per ray,
    so fields with a stream vanishing on both circles pair to roundoff.
    """
    check_same_grid(f.grid, g.grid)
    integrand = f.x * g.x + f.y * g.y
    total = np.sum(integrand * f.grid.pairing_area_weights, axis=(-2, -1))
    return float(total) if np.ndim(total) == 0 else total


def scalar_inner_product(f: ScalarField, g: ScalarField):
    check_same_grid(f.grid, g.grid)
    total = np.sum(f.values * g.values * f.grid.area_weights, axis=(-2, -1))
    return float(total) if np.ndim(total) == 0 else total


def l2_norm(F: Field) -> float:
    if isinstance(F, VectorField):
        return float(np.sqrt(np.sum(inner_product_l2(F, F))))
    return float(np.sqrt(np.sum(scalar_inner_product(F, F))))


def sup_norm(F: Field) -> float:
    return F.sup()


def _components(F: Field):
    if isinstance(F, VectorField):
        return [F.x, F.y]
    return [F.values]


def _derivatives(values: np.ndarray, grid, order: int):
    """All Cartesian derivatives of exactly the given order"""
    layer = [values]
    for _ in range(order):
        layer = [d for v in layer for d in cartesian_gradient(v, grid)]
    return layer


def _holder_quotient(values: np.ndarray, grid, alpha: float, rng: np.random.Generator) -> float:
    flat = values.reshape(-1)
    x = grid.X.reshape(-1)
    y = grid.Y.reshape(-1)
    n = flat.size
    i = rng.integers(0, n, HOLDER_PAIRS)
    j = rng.integers(0, n, HOLDER_PAIRS)
    keep = i != j
    i, j = i[keep], j[keep]
    distance = np.hypot(x[i] - x[j], y[i] - y[j])
    distance = np.maximum(distance, 1e-300)
    return float(np.max(np.abs(flat[i] - flat[j]) / distance**alpha)) if i.size else 0.0


def holder_norm(F: Field, m: int = 1, alpha: float = 0.5, seed: int = 0) -> float:
    """Discrete C^{m,alpha} surrogate.

    Sum over orders 0..m of the sup of all finite-difference derivatives,
    plus the alpha-Hoelder quotient of the order-m derivatives over a fixed
    pseudo-random set of node pairs. For vector fields the larger component
    value is used. Time series take the max over samples.
    """
    if m not in (0, 1, 2):
        raise ValueError(f"order m must be 0, 1 or 2, got {m}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    grid = F.grid
    best = 0.0
    for component in _components(F):
        samples = component.reshape((-1,) + grid.shape)
        for sample in samples:
            total = 0.0
            for order in range(m + 1):
                derivs = _derivatives(sample, grid, order)
                total += max(float(np.max(np.abs(d))) for d in derivs)
            rng = np.random.default_rng(seed)
            top = _derivatives(sample, grid, m)
            total += max(_holder_quotient(d, grid, alpha, rng) for d in top)
            best = max(best, total)
    return best
