"""Shared inputs, solution record and certification of the sub-interval algorithms."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np

from app.control.pieces import mhd_residual
from app.control.tolerances import residual_tolerance
from app.errors import ResidualExcessError
from app.fields.base import ScalarField, StreamFunction, VectorField
from app.fields.cohomology import CohomologyBasis
from app.geometry.layout import ControlLayout
from app.profile.flushing import FlushingProfile


@dataclass
class SubintervalInputs:
    """Controlled trajectory from the return method on one sub-interval [0, 1/K]"""

    V: VectorField
    H: VectorField
    psi: StreamFunction
    P: ScalarField
    Xi: VectorField
    profile: FlushingProfile
    basis: CohomologyBasis

    @property
    def times(self) -> np.ndarray:
        return self.V.times

    @property
    def layout(self) -> ControlLayout:
        return self.profile.layout


@dataclass
class SubintervalSolution:
    """Trajectory and controls of one sub-interval; B = grad_perp(psi_end) at the end"""

    u: VectorField
    B: VectorField
    p: ScalarField
    xi: VectorField
    eta: VectorField
    phi: ScalarField
    psi_end: np.ndarray
    H1: VectorField
    H2: VectorField
    diagnostics: Dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.u.times

    def shifted(self, offset: float) -> "SubintervalSolution":
        """Same solution on times moved by offset"""
        times = self.times + offset

        def move(F):
            return replace(F, times=times)

        return SubintervalSolution(
            move(self.u),
            move(self.B),
            move(self.p),
            move(self.xi),
            move(self.eta),
            move(self.phi),
            self.psi_end,
            move(self.H1),
            move(self.H2),
            dict(self.diagnostics),
        )


class SubintervalAlgorithm(ABC):
    """Base class for the sub-interval annihilation algorithms"""

    def __init__(
        self,
        name: str,
        residual_tol: Optional[float] = None,
        frozen_in_tol: Optional[float] = None,
    ):
        self.name = name
        self.residual_tol = residual_tol
        self.frozen_in_tol = frozen_in_tol

    @abstractmethod
    def assemble(self, inputs: SubintervalInputs) -> SubintervalSolution:
        """Build the controlled trajectory that deletes B near the cut by t = 1/K"""
        pass

    def run(self, inputs: SubintervalInputs) -> SubintervalSolution:
        solution = self.assemble(inputs)
        solution.diagnostics.update(self.certify(solution, inputs))
        return solution

    def certify(self, solution: SubintervalSolution, inputs: SubintervalInputs) -> Dict:
        """Localization, boundary, cohomology and residual certificates"""
        profile = inputs.profile
        layout = inputs.layout
        times = solution.times
        outside = ~layout.omega_mask
        eta_mag = solution.eta.magnitude()
        early = times < profile.period - 2.0 * profile.K0
        phi = solution.phi.values
        projection = np.atleast_1d(inputs.basis.project(solution.B))
        residual = mhd_residual(solution.u, solution.B, solution.p, solution.xi, solution.eta)
        xi_scale = max(solution.xi.sup(), 1e-300)
        xi_leak = float(np.max(solution.xi.magnitude()[..., outside])) if np.any(outside) else 0.0
        report = {
            "eta_outside_omega": float(np.max(eta_mag[..., outside])) if np.any(outside) else 0.0,
            "eta_before_window": float(np.max(eta_mag[early])) if np.any(early) else 0.0,
            "phi_on_circles": float(max(np.max(np.abs(phi[..., 0, :])), np.max(np.abs(phi[..., -1, :])))),
            "cohomology_drift": float(np.max(np.abs(projection - projection[0]))),
            "xi_leak": xi_leak,
            "xi_leak_relative": xi_leak / xi_scale,
            "momentum_residual": float(np.max(residual["momentum_relative"][1:-1])) if len(times) > 2 else 0.0,
            "induction_residual": float(np.max(residual["induction_relative"][1:-1])) if len(times) > 2 else 0.0,
        }
        worst = max(report["momentum_residual"], report["induction_residual"])
        tolerance = residual_tolerance(inputs.V.grid, times, self.residual_tol)
        report["residual_tolerance"] = tolerance
        if worst > tolerance:
            raise ResidualExcessError(
                f"{self.name}: MHD residual {worst:.3e} exceeds tolerance {tolerance:.1e}"
            )
        return report

    def cutoffs(self, profile: FlushingProfile, times: np.ndarray) -> Dict[str, np.ndarray]:
        beta = profile.cutoff_beta()
        sigma = profile.cutoff_sigma()
        return {
            "beta": beta(times),
            "beta_dot": beta.derivative(times),
            "sigma": sigma(times),
            "sigma_dot": sigma.derivative(times),
        }


def per_time(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=float)[:, None, None]


def stream_of(inputs: SubintervalInputs, values: np.ndarray) -> ScalarField:
    return ScalarField(inputs.V.grid, values, inputs.times)

