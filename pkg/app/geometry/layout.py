"""Control region, cut, sector and covering on the annulus.

The control region omega is the angular sector (omega_start, omega_end)
spanning both circles. The cut Sigma is the ray at ``sigma_angle`` and Lambda
is the closed sector of half-width ``lambda_halfwidth`` around it. Angles
inside omega are described by their signed offset from Sigma; the part of
E outside omega is mapped onto the positive side, past the right gap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Tuple

import numpy as np
from scipy.spatial import cKDTree

from app.errors import LayoutInfeasibleError
from app.geometry.grid import AnnulusGeometry
from app.geometry.profiles import smooth_step

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
BOUNDARY_SAMPLES = 257
C_STAR_MARGIN = 1.25


def sample_ray(angle: float, r1: float, r2: float, n: int = BOUNDARY_SAMPLES) -> np.ndarray:
    radii = np.linspace(r1, r2, n)
    return np.column_stack([radii * np.cos(angle), radii * np.sin(angle)])


def sample_arc(radius: float, start: float, end: float, n: int = BOUNDARY_SAMPLES) -> np.ndarray:
    angles = np.linspace(start, end, n)
    return np.column_stack([radius * np.cos(angles), radius * np.sin(angles)])


def sample_sector_boundary(start: float, end: float, r1: float, r2: float, n: int = BOUNDARY_SAMPLES) -> np.ndarray:
    """Boundary of the sector start <= theta <= end, r1 <= r <= r2"""
    n_arc = max(n, int(np.ceil(n * (end - start) / 0.1)))
    return np.vstack(
        [
            sample_ray(start, r1, r2, n),
            sample_ray(end, r1, r2, n),
            sample_arc(r1, start, end, n_arc),
            sample_arc(r2, start, end, n_arc),
        ]
    )


def min_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Brute-force minimum pairwise distance between two point samples"""
    if len(a) == 0 or len(b) == 0:
        return float("inf")
    distances, _ = cKDTree(b).query(a)
    return float(np.min(distances))


def sector_distance(x: np.ndarray, y: np.ndarray, start: float, end: float, r1: float, r2: float) -> np.ndarray:
    """Euclidean distance from points of the annulus to the sector [start, end]"""
    r = np.hypot(x, y)
    offset = np.mod(np.arctan2(y, x) - start, TWO_PI)
    inside = offset <= (end - start)
    best = np.full(np.shape(x), np.inf)
    for angle in (start, end):
        ux, uy = np.cos(angle), np.sin(angle)
        t = np.clip(x * ux + y * uy, r1, r2)
        best = np.minimum(best, np.hypot(x - t * ux, y - t * uy))
    # Outside the angular range the nearest sector point lies on a bounding ray
    return np.where(inside & (r >= r1 - 1e-12) & (r <= r2 + 1e-12), 0.0, best)


@dataclass(frozen=True)
class SideCutoffs:
    """Angular thresholds on one side of the cut (offsets from Sigma)"""

    gap: float
    a1: float
    a2: float
    mu_profile: object
    chi_profile: object


@dataclass(frozen=True)
class ControlLayout:
    """Sector layout with its covering, partition and cutoffs"""

    grid: AnnulusGeometry
    omega: Tuple[float, float]
    sigma_angle: float
    lambda_halfwidth: float
    d_lambda: float
    angular_margin: float
    left: SideCutoffs
    right: SideCutoffs
    c_star: float = 1.0
    failures: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def lambda_sector(self) -> Tuple[float, float]:
        return (self.sigma_angle - self.lambda_halfwidth, self.sigma_angle + self.lambda_halfwidth)

    @property
    def omega_width(self) -> float:
        return self.omega[1] - self.omega[0]

    def offset(self, theta) -> np.ndarray:
        """Signed angular offset from Sigma; outside omega lands past the right gap"""
        return np.mod(np.asarray(theta, dtype=float) - self.omega[0], TWO_PI) - (self.sigma_angle - self.omega[0])

    def offset_xy(self, x, y) -> np.ndarray:
        return self.offset(np.arctan2(y, x))

    def in_omega(self, theta) -> np.ndarray:
        u = np.mod(np.asarray(theta, dtype=float) - self.omega[0], TWO_PI)
        return (u > 0.0) & (u < self.omega_width)

    def in_lambda(self, theta) -> np.ndarray:
        return np.abs(self.offset(theta)) <= self.lambda_halfwidth

    def _by_side(self, delta: np.ndarray, left_values, right_values) -> np.ndarray:
        return np.where(delta >= 0.0, right_values, left_values)

    def mu1_of(self, theta) -> np.ndarray:
        delta = self.offset(theta)
        a = np.abs(delta)
        return self._by_side(delta, self.left.mu_profile(a), self.right.mu_profile(a))

    def mu1_dtheta_of(self, theta) -> np.ndarray:
        delta = self.offset(theta)
        a = np.abs(delta)
        slope = self._by_side(delta, self.left.mu_profile.derivative(a), self.right.mu_profile.derivative(a))
        return np.sign(delta) * slope

    def chi_hat_of(self, theta) -> np.ndarray:
        delta = self.offset(theta)
        a = np.abs(delta)
        return self._by_side(delta, self.left.chi_profile(a), self.right.chi_profile(a))

    def chi_hat_dtheta_of(self, theta) -> np.ndarray:
        delta = self.offset(theta)
        a = np.abs(delta)
        slope = self._by_side(delta, self.left.chi_profile.derivative(a), self.right.chi_profile.derivative(a))
        return np.sign(delta) * slope

    @cached_property
    def mu1(self) -> np.ndarray:
        return self.mu1_of(self.grid.TH)

    @cached_property
    def mu2(self) -> np.ndarray:
        return 1.0 - self.mu1

    @cached_property
    def mu1_dtheta(self) -> np.ndarray:
        return self.mu1_dtheta_of(self.grid.TH)

    @cached_property
    def chi_hat(self) -> np.ndarray:
        return self.chi_hat_of(self.grid.TH)

    @cached_property
    def omega_mask(self) -> np.ndarray:
        return self.in_omega(self.grid.TH)

    @cached_property
    def lambda_mask(self) -> np.ndarray:
        return self.in_lambda(self.grid.TH)

    def mu1_gradient(self) -> Tuple[np.ndarray, np.ndarray]:
        """Cartesian gradient of mu1 (angular only), closed form"""
        grid = self.grid
        dtheta = self.mu1_dtheta / grid.R
        return -grid.sin_theta * dtheta, grid.cos_theta * dtheta

    def cut_angle(self, theta) -> np.ndarray:
        """Angle measured from Sigma in [0, 2 pi), branch cut on Sigma"""
        return np.mod(np.asarray(theta, dtype=float) - self.sigma_angle, TWO_PI)

    @cached_property
    def cut_potential(self) -> np.ndarray:
        """chi_hat times the angle from Sigma; smooth since chi_hat = 0 near the cut"""
        return self.chi_hat * self.cut_angle(self.grid.TH)

    @cached_property
    def cut_potential_gradient(self) -> Tuple[np.ndarray, np.ndarray]:
        """Closed-form Cartesian gradient of ``cut_potential``"""
        grid = self.grid
        theta_cut = self.cut_angle(grid.TH)
        azimuthal = (self.chi_hat_dtheta_of(grid.TH) * theta_cut + self.chi_hat) / grid.R
        return -grid.sin_theta * azimuthal, grid.cos_theta * azimuthal

    def lambda_distance(self, x, y) -> np.ndarray:
        start, end = self.lambda_sector
        return sector_distance(x, y, start, end, self.grid.r_inner, self.grid.r_outer)

    def lambda_neighbourhood(self, radius: float) -> np.ndarray:
        """Node mask of the closed radius-neighbourhood of Lambda"""
        return self.lambda_distance(self.grid.X, self.grid.Y) <= radius

    def outside_omega_distance(self, x, y) -> np.ndarray:
        return sector_distance(x, y, self.omega[1], self.omega[0] + TWO_PI, self.grid.r_inner, self.grid.r_outer)


def _side_cutoffs(gap: float, halfwidth: float, margin: float) -> SideCutoffs:
    usable = gap - 2.0 * margin
    if usable <= 0.0:
        # Degenerate side; thresholds kept ordered so diagnostics can run
        a2 = halfwidth + 0.45 * gap
        a1 = halfwidth + 0.55 * gap
        chi_lo, chi_hi = halfwidth + 0.25 * gap, halfwidth + 0.75 * gap
    else:
        a2 = halfwidth + margin + usable / 3.0
        a1 = halfwidth + margin + 2.0 * usable / 3.0
        chi_lo, chi_hi = halfwidth + 0.5 * margin, halfwidth + gap - 0.5 * margin
    shrink = 0.1 * (a1 - a2)
    mu_profile = smooth_step(a2 + shrink, a1 - shrink, descending=True)
    chi_profile = smooth_step(chi_lo, chi_hi)
    return SideCutoffs(gap=gap, a1=a1, a2=a2, mu_profile=mu_profile, chi_profile=chi_profile)


def _layout_distances(layout: ControlLayout) -> Dict[str, float]:
    grid = layout.grid
    r1, r2 = grid.r_inner, grid.r_outer
    sigma = layout.sigma_angle
    lam_start, lam_end = layout.lambda_sector
    w0, w1 = layout.omega
    lam = sample_sector_boundary(lam_start, lam_end, r1, r2)
    outside = sample_sector_boundary(w1, w0 + TWO_PI, r1, r2)
    o1 = sample_sector_boundary(sigma - layout.left.a1, sigma + layout.right.a1, r1, r2)
    o2 = sample_sector_boundary(sigma + layout.right.a2, sigma + TWO_PI - layout.left.a2, r1, r2)
    return {
        "d_lambda": layout.d_lambda,
        "lambda_to_outside_omega": min_distance(lam, outside),
        "o1_to_outside_omega": min_distance(o1, outside),
        "o2_to_lambda": min_distance(o2, lam),
    }


def _estimate_c_star(layout: ControlLayout) -> float:
    """Largest sampled ratio (|grad_perp(mu1 psi)| + |grad_perp(mu2 psi)|) / |grad_perp psi|"""
    from app.fields.base import ScalarField
    from app.fields.norms import holder_norm
    from app.fields.operators import grad_perp

    grid = layout.grid
    s = (grid.R - grid.r_inner) / (grid.r_outer - grid.r_inner)
    best = 1.0
    for n in (1, 2):
        for m in (0, 1, 3):
            psi = np.sin(n * np.pi * s) * np.cos(m * (grid.TH - layout.sigma_angle))
            whole = holder_norm(grad_perp(ScalarField(grid, psi)), m=1, alpha=0.5)
            if whole <= 0.0:
                continue
            parts = holder_norm(grad_perp(ScalarField(grid, layout.mu1 * psi)), m=1, alpha=0.5) + holder_norm(
                grad_perp(ScalarField(grid, layout.mu2 * psi)), m=1, alpha=0.5
            )
            best = max(best, parts / whole)
    return best * C_STAR_MARGIN


def _check_failures(distances: Dict[str, float], layout: ControlLayout) -> List[str]:
    d = layout.d_lambda
    failures = []
    if layout.left.gap <= 0.0 or layout.right.gap <= 0.0:
        failures.append("lambda_inside_omega")
    if not distances["lambda_to_outside_omega"] > 4.0 * d:
        failures.append("lambda_to_outside_omega")
    if not distances["o1_to_outside_omega"] > 2.0 * d:
        failures.append("o1_to_outside_omega")
    if not distances["o2_to_lambda"] > 2.0 * d:
        failures.append("o2_to_lambda")
    return failures


def build_control_layout(
    grid: AnnulusGeometry,
    omega_span: Tuple[float, float],
    sigma_angle: float,
    lambda_halfwidth: float,
    strict: bool = True,
    estimate_c_star: bool = True,
) -> ControlLayout:
    """Build the sector layout; raise LayoutInfeasibleError when a distance inequality fails.

    With ``strict=False`` a layout is returned regardless, its failed checks
    listed in ``failures``.
    """
    w0, w1 = float(omega_span[0]), float(omega_span[1])
    if not (0.0 < w1 - w0 < TWO_PI):
        raise LayoutInfeasibleError(f"omega span must have width in (0, 2 pi), got ({w0}, {w1})")
    if not (0.0 < lambda_halfwidth < np.pi / 2):
        raise LayoutInfeasibleError(f"lambda half-width must lie in (0, pi/2), got {lambda_halfwidth}")
    sigma = w0 + float(np.mod(sigma_angle - w0, TWO_PI))
    r1, r2 = grid.r_inner, grid.r_outer

    # Distance from the cut to the two radial sides of Lambda
    d_lambda = min_distance(
        sample_ray(sigma, r1, r2, 4 * BOUNDARY_SAMPLES),
        np.vstack(
            [
                sample_ray(sigma - lambda_halfwidth, r1, r2, 4 * BOUNDARY_SAMPLES),
                sample_ray(sigma + lambda_halfwidth, r1, r2, 4 * BOUNDARY_SAMPLES),
            ]
        ),
    )
    margin = 2.0 * float(np.arcsin(min(1.0, d_lambda / r1)))
    gap_left = sigma - lambda_halfwidth - w0
    gap_right = w1 - sigma - lambda_halfwidth

    layout = ControlLayout(
        grid=grid,
        omega=(w0, w1),
        sigma_angle=sigma,
        lambda_halfwidth=float(lambda_halfwidth),
        d_lambda=d_lambda,
        angular_margin=margin,
        left=_side_cutoffs(gap_left, lambda_halfwidth, margin),
        right=_side_cutoffs(gap_right, lambda_halfwidth, margin),
    )
    failures = _check_failures(_layout_distances(layout), layout)
    if failures and strict:
        raise LayoutInfeasibleError(f"layout infeasible: {', '.join(failures)}")
    c_star = _estimate_c_star(layout) if estimate_c_star else 1.0
    layout = ControlLayout(
        grid=layout.grid,
        omega=layout.omega,
        sigma_angle=layout.sigma_angle,
        lambda_halfwidth=layout.lambda_halfwidth,
        d_lambda=layout.d_lambda,
        angular_margin=layout.angular_margin,
        left=layout.left,
        right=layout.right,
        c_star=c_star,
        failures=tuple(failures),
    )
    logger.info(
        "Control layout: d_lambda=%.4g, gaps=(%.4g, %.4g), C*=%.3g%s",
        d_lambda,
        gap_left,
        gap_right,
        c_star,
        f", failures={failures}" if failures else "",
    )
    return layout


def verify_layout(layout: ControlLayout, mu1: np.ndarray = None) -> Dict:
    """Distances, partition residual and a pass flag per layout invariant"""
    grid = layout.grid
    mu1 = layout.mu1 if mu1 is None else mu1
    mu2 = layout.mu2
    distances = _layout_distances(layout)
    d = layout.d_lambda
    delta = layout.offset(grid.TH)
    a = np.abs(delta)
    a1 = np.where(delta >= 0.0, layout.right.a1, layout.left.a1)
    a2 = np.where(delta >= 0.0, layout.right.a2, layout.left.a2)
    residual = float(np.max(np.abs(mu1 + mu2 - 1.0)))
    cutoffs = [mu1, mu2, layout.chi_hat]

    checks = {
        "sigma_inside_lambda": d > 0.0,
        "lambda_inside_omega": layout.left.gap > 0.0 and layout.right.gap > 0.0,
        "lambda_to_outside_omega": distances["lambda_to_outside_omega"] > 4.0 * d,
        "o1_to_outside_omega": distances["o1_to_outside_omega"] > 2.0 * d,
        "o2_to_lambda": distances["o2_to_lambda"] > 2.0 * d,
        "covering": bool(np.all((a < a1) | (a > a2))),
        "partition_sum": residual <= 1e-14,
        "mu1_support": bool(np.all(mu1[a >= a1] == 0.0)),
        "mu2_support": bool(np.all(mu2[a <= a2] == 0.0)),
        "cutoff_bounds": all(bool(np.all((c >= 0.0) & (c <= 1.0))) for c in cutoffs),
        "complement_simply_connected": 0.0 < layout.lambda_halfwidth < np.pi,
    }
    return {
        "distances": distances,
        "partition_residual": residual,
        "checks": checks,
        "passed": all(checks.values()),
    }
