"""Return-method flushing profile y* = lambda(t) grad_perp(q).

q is the harmonic function with q = 0 on the inner circle and q = a on the
outer circle, so y_base = grad_perp(q) = (a / ln(r2/r1)) grad_perp(ln r):
azimuthal, clockwise, without critical points. The amplitude lambda is a
1/K-periodic bump of area M per period. M is calibrated so one period drags
no point farther than d_lambda/2; K so that the slowest circle is carried
through the cut within the unit window.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.errors import CalibrationError, SupportLeakError
from app.fields.base import ScalarField, VectorField
from app.fields.cohomology import grad_perp_log_radius
from app.fields.operators import advective, cartesian_gradient, gradient
from app.fields.poisson import poisson_dirichlet
from app.geometry.grid import AnnulusGeometry
from app.geometry.layout import ControlLayout
from app.geometry.profiles import PeriodicProfile, SmoothProfile1D, smooth_bump, smooth_step
from app.transport.checks import separation_check, verify_dragging, verify_flushing
from app.transport.flow import (
    DEFAULT_RK_SUBSTEPS,
    DEFAULT_SAMPLES_PER_PERIOD,
    FlowMap,
    SeparableDrift,
    integrate_flow,
    integrate_points,
    sample_times,
)

logger = logging.getLogger(__name__)

DRAG_SAFETY = 0.9
CALIBRATION_AGREEMENT = 0.05
LEAK_TOLERANCE = 1e-8


def harmonic_potential(grid: AnnulusGeometry, a: float = 1.0) -> ScalarField:
    """Harmonic q with q = 0 on the inner and q = a on the outer circle"""
    if a == 0:
        raise ValueError("harmonic potential needs a nonzero outer value")
    return poisson_dirichlet(ScalarField.zeros(grid), 0.0, a)


def flushing_base_field(grid: AnnulusGeometry, a: float = 1.0) -> VectorField:
    """grad_perp(q) in closed form"""
    return grad_perp_log_radius(grid) * (a / grid.log_ratio)


def angular_speed(y_base: VectorField) -> np.ndarray:
    """Signed angular velocity d(theta)/dt of the base flow at each node"""
    return y_base.azimuthal() / y_base.grid.R


def closed_form_M(grid: AnnulusGeometry, a: float, d_lambda: float) -> float:
    """Largest M with 2 r sin(M a / (2 L r^2)) below the safety bound for all r"""
    target = DRAG_SAFETY * 0.5 * d_lambda
    ratio = target / (2.0 * grid.r_inner)
    if ratio >= 1.0:
        raise CalibrationError("drag bound exceeds the inner diameter")
    return 2.0 * grid.log_ratio * grid.r_inner**2 * math.asin(ratio) / abs(a)


def _autonomous_displacement(y_base: VectorField, duration: float, steps: int = 64) -> float:
    """Largest chord between positions of one trajectory of y_base on [0, duration]"""
    grid = y_base.grid
    drift = SeparableDrift(y_base, lambda t: 1.0, max(duration, 1e-300) / steps)
    record = np.linspace(0.0, duration, 9)
    xs, ys, _ = integrate_points(drift, grid.X, grid.Y, 0.0, record)
    best = 0.0
    for i in range(len(record)):
        for k in range(i + 1, len(record)):
            best = max(best, float(np.max(np.hypot(xs[i] - xs[k], ys[i] - ys[k]))))
    return best


def calibrate_M(y_base: VectorField, d_lambda: float, tolerance: float = 1e-4) -> Dict:
    """Largest admissible M by bisection on simulated unit-area flows"""
    if not (d_lambda > 0.0 and np.isfinite(d_lambda)):
        raise CalibrationError(f"degenerate layout: d_lambda = {d_lambda}")
    target = DRAG_SAFETY * 0.5 * d_lambda
    speed = y_base.sup()
    if speed == 0.0:
        raise CalibrationError("flushing base field vanishes")
    # |x - Y_M(x)| <= |y|_inf M: anything below this is admissible without simulation
    low = target / speed
    if _autonomous_displacement(y_base, low) >= target:
        raise CalibrationError("even the pre-filtered M violates the drag bound")
    high = 2.0 * low
    while _autonomous_displacement(y_base, high) < target:
        low, high = high, 2.0 * high
        if high > 1e6 * target / speed:
            raise CalibrationError("drag bound never reached during calibration")
    while (high - low) > tolerance * low:
        mid = 0.5 * (low + high)
        if _autonomous_displacement(y_base, mid) < target:
            low = mid
        else:
            high = mid
    return {"M": low, "prefilter_M": target / speed, "target_displacement": target}


def calibrate_K(y_base: VectorField, M: float) -> int:
    """Smallest K flushing the slowest circle through a full turn, plus a spare period"""
    slowest = float(np.min(np.abs(angular_speed(y_base)))) * M
    if slowest <= 0.0:
        raise CalibrationError("flushing base field has a stagnant node")
    return max(2, int(math.ceil(2.0 * math.pi / slowest)) + 1)


@dataclass
class FlushingProfile:
    """Calibrated flushing profile with its pressure and control"""

    grid: AnnulusGeometry
    layout: ControlLayout
    a: float
    q: ScalarField
    y_base: VectorField
    K: int
    M: float
    K0: float
    amplitude: PeriodicProfile
    samples_per_period: int = DEFAULT_SAMPLES_PER_PERIOD
    rk_substeps: int = DEFAULT_RK_SUBSTEPS
    nu0: float = float("nan")
    nu: float = float("nan")
    lipschitz: float = float("nan")
    diagnostics: Dict = field(default_factory=dict)
    flow: Optional[FlowMap] = None

    @property
    def period(self) -> float:
        return 1.0 / self.K

    @property
    def time_step(self) -> float:
        return 1.0 / (self.K * self.samples_per_period * self.rk_substeps)

    def times(self, t0: float = 0.0, t1: float = 1.0) -> np.ndarray:
        return sample_times(t0, t1, self.K, self.samples_per_period)

    def subintervals(self) -> List[Tuple[float, float]]:
        return [(j / self.K, (j + 1) / self.K) for j in range(self.K)]

    def lam(self, t):
        return self.amplitude(t)

    def lam_derivative(self, t):
        return self.amplitude.derivative(t)

    def drift(self) -> SeparableDrift:
        return SeparableDrift(self.y_base, lambda t: float(self.amplitude(t)), self.time_step)

    def velocity(self, t: float) -> VectorField:
        return self.y_base * float(self.amplitude(t))

    def velocity_series(self, times: np.ndarray) -> VectorField:
        return self.drift().sample(times)

    @property
    def potential(self) -> np.ndarray:
        """r_pot with grad(r_pot) = y_base away from Lambda"""
        return -(self.a / self.grid.log_ratio) * self.layout.cut_potential

    @property
    def potential_gradient(self) -> Tuple[np.ndarray, np.ndarray]:
        gx, gy = self.layout.cut_potential_gradient
        factor = -(self.a / self.grid.log_ratio)
        return factor * gx, factor * gy

    def p_star(self, t: float) -> np.ndarray:
        lam = float(self.amplitude(t))
        dlam = float(self.amplitude.derivative(t))
        speed2 = self.y_base.x**2 + self.y_base.y**2
        return -self.potential * dlam - 0.5 * lam * lam * speed2

    def xi_star(self, t: float) -> VectorField:
        """lambda'(t) (y_base - grad r_pot), the Bernoulli-reduced control"""
        dlam = float(self.amplitude.derivative(t))
        gx, gy = self.potential_gradient
        return VectorField(self.grid, dlam * (self.y_base.x - gx), dlam * (self.y_base.y - gy))

    def series(self, times: np.ndarray) -> Dict[str, object]:
        """Sampled (y*, p*, xi*) on the given times"""
        times = np.asarray(times, dtype=float)
        y = self.velocity_series(times)
        p = ScalarField(self.grid, np.stack([self.p_star(t) for t in times]), times)
        xi_samples = [self.xi_star(t) for t in times]
        xi = VectorField(
            self.grid, np.stack([s.x for s in xi_samples]), np.stack([s.y for s in xi_samples]), times
        )
        return {"y": y, "p": p, "xi": xi}

    def euler_residual(self, t: float) -> VectorField:
        """d_t y* + (y*.grad) y* + grad p* - xi* with numerical spatial derivatives"""
        y = self.velocity(t)
        dy_dt = self.y_base * float(self.amplitude.derivative(t))
        grad_p = gradient(ScalarField(self.grid, self.p_star(t)))
        return dy_dt + advective(y, y) + grad_p - self.xi_star(t)

    def cutoff_beta(self) -> SmoothProfile1D:
        return smooth_step(self.period - self.K0, self.period - 0.5 * self.K0, descending=True)

    def cutoff_sigma(self) -> SmoothProfile1D:
        return smooth_step(self.period - 2.0 * self.K0, self.period - self.K0)

    def cutoff_lambda0(self) -> SmoothProfile1D:
        return smooth_step(0.0, 0.5 * self.period, descending=True)

    def gamma_halfwidth(self) -> float:
        return 0.25 * self.period

    def summary(self) -> Dict:
        return {
            "K": self.K,
            "M": self.M,
            "K0": self.K0,
            "a": self.a,
            "d_lambda": self.layout.d_lambda,
            "nu0": self.nu0,
            "nu": self.nu,
            "lipschitz": self.lipschitz,
            "samples_per_period": self.samples_per_period,
            "rk_substeps": self.rk_substeps,
            **{k: v for k, v in self.diagnostics.items() if isinstance(v, (int, float, bool, str))},
        }


def lipschitz_surrogate(y_base: VectorField) -> float:
    """Largest Frobenius norm of the Cartesian Jacobian over the grid"""
    grid = y_base.grid
    xx, xy = cartesian_gradient(y_base.x, grid)
    yx, yy = cartesian_gradient(y_base.y, grid)
    return float(np.max(np.sqrt(xx**2 + xy**2 + yx**2 + yy**2)))


def calibrate_nu(profile: FlushingProfile, flow: Optional[FlowMap] = None) -> Tuple[float, float]:
    """Separation radius nu0 and admissible drift perturbation nu"""
    layout = profile.layout
    d = layout.d_lambda
    K = profile.K
    if flow is None:
        flow = integrate_flow(profile.drift(), 0.0, 1.0, record=profile.times())
    checkpoints = [j / K for j in range(K + 1)]
    separation = separation_check(flow, checkpoints, d / (2.0 * K), 0.0)
    nu0 = min(d / (4.0 * K), 0.5 * separation["min_separation"])

    dragging = verify_dragging(flow, profile.subintervals(), 0.5 * d)
    margin = 0.5 * d - dragging["max_displacement"]
    lip = lipschitz_surrogate(profile.y_base)
    integrated = lip * K * profile.M
    nu = max(0.0, min(nu0, margin)) * math.exp(-integrated)
    profile.lipschitz = lip
    profile.diagnostics["integrated_lipschitz"] = integrated
    profile.diagnostics["drag_margin"] = margin
    logger.info("Stability radii: nu0=%.3e, nu=%.3e (integrated Lipschitz %.3g)", nu0, nu, integrated)
    return nu0, nu


def assemble_flushing_profile(
    grid: AnnulusGeometry,
    layout: ControlLayout,
    a: float = 1.0,
    samples_per_period: int = DEFAULT_SAMPLES_PER_PERIOD,
    rk_substeps: int = DEFAULT_RK_SUBSTEPS,
    verify: bool = True,
) -> FlushingProfile:
    """Calibrate M, K, build lambda and y*, then certify flushing, dragging and support"""
    q = harmonic_potential(grid, a)
    y_base = flushing_base_field(grid, a)
    exact_q = a * np.log(grid.R / grid.r_inner) / grid.log_ratio
    q_error = float(np.max(np.abs(q.values - exact_q)))

    calibration = calibrate_M(y_base, layout.d_lambda)
    M = calibration["M"]
    M_exact = closed_form_M(grid, a, layout.d_lambda)
    disagreement = abs(M - M_exact) / M_exact
    if disagreement > CALIBRATION_AGREEMENT:
        raise CalibrationError(f"simulated M={M:.6g} disagrees with closed form {M_exact:.6g}")
    K = calibrate_K(y_base, M)
    K0 = 1.0 / (8.0 * K)
    amplitude = PeriodicProfile(smooth_bump(0.0, 1.0 / K - 2.0 * K0, M), 1.0 / K)
    logger.info("Flushing profile calibrated: M=%.6g (closed form %.6g), K=%d", M, M_exact, K)

    profile = FlushingProfile(
        grid=grid,
        layout=layout,
        a=a,
        q=q,
        y_base=y_base,
        K=K,
        M=M,
        K0=K0,
        amplitude=amplitude,
        samples_per_period=samples_per_period,
        rk_substeps=rk_substeps,
        diagnostics={
            "q_error": q_error,
            "M_closed_form": M_exact,
            "M_prefilter": calibration["prefilter_M"],
            "M_disagreement": disagreement,
        },
    )
    _check_xi_support(profile)
    if verify:
        flow = integrate_flow(profile.drift(), 0.0, 1.0, record=profile.times())
        flushing = verify_flushing(flow, layout)
        dragging = verify_dragging(flow, profile.subintervals(), 0.5 * layout.d_lambda)
        profile.flow = flow
        profile.diagnostics.update(
            {
                "flushing_passed": flushing["passed"],
                "latest_crossing": flushing["latest_crossing"],
                "dragging_passed": dragging["passed"],
                "dragging_margin": dragging["margin"],
            }
        )
        if not flushing["passed"]:
            logger.warning("Flushing check failed for %d nodes", len(flushing["failed_nodes"]))
        profile.nu0, profile.nu = calibrate_nu(profile, flow)
    return profile


def _check_xi_support(profile: FlushingProfile) -> None:
    """xi* must vanish outside omega; checked at the steepest slope of lambda"""
    t_samples = np.linspace(0.0, profile.period, 65)
    slopes = np.abs(profile.amplitude.derivative(t_samples))
    t_star = float(t_samples[int(np.argmax(slopes))])
    xi = profile.xi_star(t_star)
    outside = ~profile.layout.omega_mask
    scale = max(xi.sup(), 1e-300)
    leak = float(np.max(xi.magnitude()[outside])) if np.any(outside) else 0.0
    profile.diagnostics["xi_leak"] = leak / scale
    if leak > LEAK_TOLERANCE * scale:
        raise SupportLeakError(f"xi* leaks outside omega: {leak:.3e} relative to {scale:.3e}")
