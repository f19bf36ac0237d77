"""Analytic data catalog.

Every entry is a stream function psi vanishing on both circles, given with
its closed-form polar derivatives, so the fields grad_perp(psi) are
divergence-free and tangential and can serve as exact oracles.
"""

from typing import Dict, Optional

import numpy as np

from app.fields.base import ScalarField, StreamFunction, VectorField
from app.geometry.grid import AnnulusGeometry, wrap_angle
from app.geometry.profiles import smooth_bump
from app.scenario.config import FieldSpec

RADIAL_MARGIN = 0.1

CATALOG = [
    {
        "id": "zero",
        "name": "Zero field",
        "description": "Identically zero",
        "parameters": {},
    },
    {
        "id": "sine_stream",
        "name": "Sine stream",
        "description": "grad_perp((r - r1)(r2 - r) sin(k theta)) times the amplitude",
        "parameters": {
            "amplitude": {"type": "float", "default": 0.0, "min": 0.0},
            "mode": {"type": "int", "default": 1, "min": 0},
        },
    },
    {
        "id": "sector_bump",
        "name": "Sector bump",
        "description": "Compactly supported stream bump in an angular sector away from both circles",
        "parameters": {
            "amplitude": {"type": "float", "default": 0.0, "min": 0.0},
            "center_angle": {"type": "float", "default": float(np.pi)},
            "width": {"type": "float", "default": 0.6, "min": 0.0},
        },
    },
    {
        "id": "rotated_gaussian",
        "name": "Rotated Gaussian",
        "description": "Anisotropic Gaussian stream, rotated, damped by (r - r1)(r2 - r)",
        "parameters": {
            "amplitude": {"type": "float", "default": 0.0, "min": 0.0},
            "center_angle": {"type": "float", "default": float(np.pi)},
            "center_radius": {"type": "float", "default": None},
            "width": {"type": "float", "default": 0.6, "min": 0.0},
            "radial_width": {"type": "float", "default": None},
            "rotation": {"type": "float", "default": 0.0},
        },
    },
]


def _vanishing_factor(grid: AnnulusGeometry, R: np.ndarray):
    """(r - r1)(r2 - r) and its radial derivative"""
    r1, r2 = grid.r_inner, grid.r_outer
    return (R - r1) * (r2 - R), (r2 - R) - (R - r1)


def sine_stream(grid: AnnulusGeometry, mode: int = 1, phase: float = 0.0) -> Dict[str, np.ndarray]:
    g, g_r = _vanishing_factor(grid, grid.R)
    s, c = np.sin(mode * grid.TH + phase), np.cos(mode * grid.TH + phase)
    return {"psi": g * s, "psi_r": g_r * s, "psi_theta": mode * g * c}


def sector_bump(grid: AnnulusGeometry, center_angle: float, width: float) -> Dict[str, np.ndarray]:
    if width >= np.pi:
        raise ValueError("sector width must be below pi")
    span = grid.r_outer - grid.r_inner
    radial = smooth_bump(grid.r_inner + RADIAL_MARGIN * span, grid.r_outer - RADIAL_MARGIN * span, 1.0)
    angular = smooth_bump(-width, width, 1.0)
    peak = float(radial(0.5 * (radial.t0 + radial.t1))) * float(angular(0.0))
    delta = wrap_angle(grid.TH - center_angle)
    a, a_t = angular(delta), angular.derivative(delta)
    b, b_r = radial(grid.R), radial.derivative(grid.R)
    return {"psi": a * b / peak, "psi_r": a * b_r / peak, "psi_theta": a_t * b / peak}


def rotated_gaussian(
    grid: AnnulusGeometry,
    center_angle: float,
    width: float,
    center_radius: Optional[float] = None,
    radial_width: Optional[float] = None,
    rotation: float = 0.0,
) -> Dict[str, np.ndarray]:
    rc = 0.5 * (grid.r_inner + grid.r_outer) if center_radius is None else center_radius
    w1 = width
    w2 = 0.5 * width if radial_width is None else radial_width
    cx, cy = rc * np.cos(center_angle), rc * np.sin(center_angle)
    cr, sr = np.cos(rotation), np.sin(rotation)
    dx, dy = grid.X - cx, grid.Y - cy
    s1 = cr * dx + sr * dy
    s2 = -sr * dx + cr * dy
    gauss = np.exp(-0.5 * ((s1 / w1) ** 2 + (s2 / w2) ** 2))
    gx = -gauss * (s1 * cr / w1**2 - s2 * sr / w2**2)
    gy = -gauss * (s1 * sr / w1**2 + s2 * cr / w2**2)
    # Polar derivatives of the Gaussian from its Cartesian ones
    cos_t, sin_t = grid.cos_theta, grid.sin_theta
    gauss_r = cos_t * gx + sin_t * gy
    gauss_t = grid.R * (-sin_t * gx + cos_t * gy)
    g, g_r = _vanishing_factor(grid, grid.R)
    return {"psi": g * gauss, "psi_r": g_r * gauss + g * gauss_r, "psi_theta": g * gauss_t}


def stream_values(spec: FieldSpec, grid: AnnulusGeometry) -> Dict[str, np.ndarray]:
    """psi and its polar derivatives for a catalog entry, amplitude included"""
    if spec.kind == "zero" or spec.amplitude == 0.0:
        zero = np.zeros(grid.shape)
        return {"psi": zero, "psi_r": zero.copy(), "psi_theta": zero.copy()}
    if spec.kind == "sine_stream":
        parts = sine_stream(grid, spec.mode)
    elif spec.kind == "sector_bump":
        parts = sector_bump(grid, spec.center_angle, spec.width)
    elif spec.kind == "rotated_gaussian":
        parts = rotated_gaussian(
            grid, spec.center_angle, spec.width, spec.center_radius, spec.radial_width, spec.rotation
        )
    else:
        raise ValueError(f"unknown catalog entry: {spec.kind}")
    return {key: spec.amplitude * value for key, value in parts.items()}


def catalog_stream(spec: FieldSpec, grid: AnnulusGeometry) -> StreamFunction:
    parts = stream_values(spec, grid)
    return StreamFunction(ScalarField(grid, parts["psi"]), (0.0, 0.0))


def _perp_from_polar(parts: Dict[str, np.ndarray], grid: AnnulusGeometry) -> VectorField:
    """grad_perp(psi) = (d psi/dy, -d psi/dx) from the polar derivatives"""
    psi_r = parts["psi_r"]
    psi_t = parts["psi_theta"] / grid.R
    dx = grid.cos_theta * psi_r - grid.sin_theta * psi_t
    dy = grid.sin_theta * psi_r + grid.cos_theta * psi_t
    return VectorField(grid, dy, -dx)


def catalog_field(spec: FieldSpec, grid: AnnulusGeometry) -> VectorField:
    return _perp_from_polar(stream_values(spec, grid), grid)


def random_field(grid: AnnulusGeometry, seed: int = 0, n_modes: int = 3, amplitude: float = 1.0) -> VectorField:
    """Seeded random combination of phase-shifted sine streams"""
    rng = np.random.default_rng(seed)
    total = {"psi": 0.0, "psi_r": 0.0, "psi_theta": 0.0}
    for mode in range(1, n_modes + 1):
        weight = amplitude * float(rng.uniform(0.2, 1.0))
        parts = sine_stream(grid, mode, float(rng.uniform(0.0, 2.0 * np.pi)))
        for key in total:
            total[key] = total[key] + weight * parts[key]
    return _perp_from_polar(total, grid)
