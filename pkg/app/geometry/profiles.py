"""Smooth one-dimensional profiles: exponential bumps and steps.

These carry every time cutoff (lambda, lambda0, beta, sigma, gamma, the
cohomology schedule) and every angular cutoff (mu, chi_hat) used by the
control constructions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.integrate import quad

ProfileKind = Literal["bump", "step-up", "step-down"]


def _bump_core(s: np.ndarray) -> np.ndarray:
    """exp(-1/(1-s^2)) on (-1, 1), zero elsewhere"""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    safe = np.where(inside, s, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - safe**2)), 0.0)


def _bump_core_derivative(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    safe = np.where(inside, s, 0.0)
    value = np.exp(-1.0 / (1.0 - safe**2)) * (-2.0 * safe / (1.0 - safe**2) ** 2)
    return np.where(inside, value, 0.0)


def _edge(x: np.ndarray) -> np.ndarray:
    """exp(-1/x) for x > 0, zero otherwise"""
    x = np.asarray(x, dtype=float)
    positive = x > 0.0
    safe = np.where(positive, x, 1.0)
    return np.where(positive, np.exp(-1.0 / safe), 0.0)


def _edge_derivative(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    positive = x > 0.0
    safe = np.where(positive, x, 1.0)
    return np.where(positive, np.exp(-1.0 / safe) / safe**2, 0.0)


def _step_core(u: np.ndarray) -> np.ndarray:
    """0 for u <= 0, 1 for u >= 1, smooth and monotone in between"""
    a = _edge(u)
    b = _edge(1.0 - u)
    return a / (a + b)


def _step_core_derivative(u: np.ndarray) -> np.ndarray:
    a = _edge(u)
    b = _edge(1.0 - u)
    da = _edge_derivative(u)
    db = -_edge_derivative(1.0 - u)
    return (da * b - a * db) / (a + b) ** 2


_BUMP_MASS = quad(lambda s: float(_bump_core(s)), -1.0, 1.0, epsabs=1e-15, epsrel=1e-14, limit=200)[0]


@dataclass(frozen=True)
class SmoothProfile1D:
    """C-infinity bump or step on the interval (t0, t1)"""

    kind: ProfileKind
    t0: float
    t1: float
    normalization: float = 1.0

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise ValueError(f"profile needs t0 < t1, got ({self.t0}, {self.t1})")

    @property
    def width(self) -> float:
        return self.t1 - self.t0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "bump":
            s = (2.0 * t - self.t0 - self.t1) / self.width
            # Area normalization: integral over (t0, t1) equals normalization
            scale = 2.0 * self.normalization / (self.width * _BUMP_MASS)
            return scale * _bump_core(s)
        u = (t - self.t0) / self.width
        up = _step_core(u)
        value = up if self.kind == "step-up" else 1.0 - up
        return self.normalization * value

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "bump":
            s = (2.0 * t - self.t0 - self.t1) / self.width
            scale = 2.0 * self.normalization / (self.width * _BUMP_MASS)
            return scale * _bump_core_derivative(s) * (2.0 / self.width)
        u = (t - self.t0) / self.width
        slope = _step_core_derivative(u) / self.width
        return self.normalization * (slope if self.kind == "step-up" else -slope)

    def integral(self) -> float:
        """Quadrature of the profile over its support"""
        if self.kind != "bump":
            raise ValueError("integral is defined for bumps only")
        return quad(lambda t: float(self(t)), self.t0, self.t1, epsabs=1e-15, epsrel=1e-13, limit=200)[0]


@dataclass(frozen=True)
class PeriodicProfile:
    """A profile repeated with the given period (used for lambda)"""

    base: SmoothProfile1D
    period: float

    def __call__(self, t):
        return self.base(np.mod(np.asarray(t, dtype=float), self.period))

    def derivative(self, t):
        return self.base.derivative(np.mod(np.asarray(t, dtype=float), self.period))

    def sup(self) -> float:
        samples = np.linspace(self.base.t0, self.base.t1, 2049)
        return float(np.max(np.abs(self.base(samples))))


def smooth_bump(t0: float, t1: float, area: float) -> SmoothProfile1D:
    """Nonnegative C-infinity bump supported in (t0, t1) with the given integral"""
    return SmoothProfile1D("bump", t0, t1, normalization=area)


def smooth_step(t0: float, t1: float, descending: bool = False) -> SmoothProfile1D:
    """Monotone C-infinity transition between exact 0 and exact 1 on (t0, t1)"""
    return SmoothProfile1D("step-down" if descending else "step-up", t0, t1)
