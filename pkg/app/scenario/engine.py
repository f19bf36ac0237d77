"""Scenario execution: geometry, profile, control phases, bundle export and verification."""

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from app.control.divide import DivideConfig, DivideResult, annihilation_threshold, run_divide_and_control
from app.control.elsasser import gpm_source
from app.control.gluing import GlobalSolution, TrajectorySegment, choose_epsilon, glue_and_scale
from app.control.pieces import assemble_Xi
from app.control.return_method import ReturnMethodConfig, run_return_method
from app.control.splitting import compare_eta_hat
from app.errors import ControlLabError, ScenarioPhaseError
from app.fields.base import VectorField
from app.fields.cohomology import cohomology_basis
from app.fields.operators import curl2
from app.geometry.grid import build_annulus_grid
from app.geometry.layout import build_control_layout, verify_layout
from app.profile.flushing import assemble_flushing_profile
from app.scenario.catalog import catalog_field, catalog_stream, random_field
from app.scenario.config import Scenario
from app.scenario.exports import REPORT, VERDICT, BundleWriter, load_bundle, to_json
from app.scenario.metrics import constraint_defects, observed_order, verify_report
from app.settings import default_output_root
from app.transport.advection import advect_stream_frozen
from app.transport.checks import gronwall_check, verify_dragging, verify_flushing
from app.transport.flow import SampledDrift, sample_times

logger = logging.getLogger(__name__)

GRONWALL_PAIRS = 20
GPM_SAMPLES = 10
REFINEMENT_SCALE = 2.0


@contextmanager
def phase(name: str):
    """Tag errors raised inside with the phase name"""
    logger.info("Phase %s", name)
    try:
        yield
    except ScenarioPhaseError:
        raise
    except (ControlLabError, ValueError) as e:
        logger.error("Phase %s failed: %s", name, e)
        raise ScenarioPhaseError(name, e) from e


class ScenarioEngine:
    """Runs one scenario end to end and writes its artifact bundle"""

    def __init__(self, scenario: Scenario, output_root: Optional[Union[str, Path]] = None, threads: Optional[int] = None):
        self.scenario = scenario
        self.solver = scenario.solver
        root = scenario.output_dir or output_root
        self.output_root = Path(root) if root else default_output_root()
        self.threads = threads or self.solver.threads
        self.rng = np.random.default_rng(scenario.seed)
        self.report: Dict = {"name": scenario.name, "mode": scenario.mode, "seed": scenario.seed}

    def run(self) -> Dict:
        if self.scenario.mode == "verify-only":
            with phase("verify"):
                return verify_bundle(self.scenario.bundle)

        writer = BundleWriter(self.output_root, self.scenario.name, self.threads)
        self.writer = writer
        writer.write_json("scenario.json", self.scenario.model_dump(mode="json"))

        with phase("geometry"):
            self._build_geometry()
        with phase("profile"):
            self._build_profile()
        if self.scenario.mode == "flush-demo":
            writer.write_json(REPORT, self.report)
            writer.finalize()
            return {"path": str(writer.path), "passed": bool(self.report["profile"].get("flushing_passed", True))}

        with phase("profile"):
            self._gronwall()
        with phase("return-method"):
            self._load_data()

        solution = None
        if self.scenario.mode == "return-method":
            with phase("return-method"):
                solution = self._return_method()
        elif self.scenario.mode == "full-null-control":
            with phase("divide-and-control"):
                solution = self._full_null_control()
        elif self.scenario.mode == "full-two-point":
            solution = self._full_two_point()

        self.report["measurements"] = self._measurements(solution)
        if self.scenario.refinement:
            with phase("refinement"):
                self._refine()

        with phase("export"):
            writer.write_trajectory(solution)
            if self.scenario.snapshots:
                indices = np.unique(np.linspace(0, len(solution.times) - 1, self.scenario.snapshots).astype(int))
                writer.write_snapshots(solution, indices.tolist(), self.scenario.vtk)
            writer.write_json(REPORT, self.report)
            writer.finalize()
        with phase("verify"):
            return verify_bundle(writer.path)

    def _measurements(self, solution: GlobalSolution) -> Dict[str, float]:
        """Quantities whose decay under refinement the criteria check"""
        values = {f"{name}_divergence": constraint_defects(F)["divergence"] for name, F in (("u", solution.u), ("B", solution.B))}
        euler = self.report.get("euler")
        if euler:
            values["euler_final_sup"] = euler["final_sup"]
        divide = self.report.get("divide")
        if divide and divide["annihilation"].get("complete"):
            values["annihilation_final_sup"] = divide["annihilation"]["final_sup"]
        eta_hat = self.report.get("identities", {}).get("eta_hat")
        if eta_hat:
            values["eta_hat_mismatch"] = eta_hat["mismatch_relative"]
        return values

    def _refine(self) -> None:
        """Same scenario at twice the resolution; observed orders go into the report"""
        fine_scenario = self.scenario.rescaled(REFINEMENT_SCALE).model_copy(
            update={
                "name": f"{self.scenario.name}-refined",
                "refinement": False,
                "output_dir": None,
                "snapshots": 0,
                "vtk": False,
            }
        )
        engine = ScenarioEngine(fine_scenario, self.writer.path, self.threads)
        engine.run()
        coarse = self.report["measurements"]
        fine = engine.report["measurements"]
        orders = {key: observed_order(coarse[key], fine[key], REFINEMENT_SCALE) for key in coarse if key in fine}
        self.report["refinement"] = {"scale": REFINEMENT_SCALE, "coarse": coarse, "fine": fine, "orders": orders}
        logger.info("Refinement orders: %s", ", ".join(f"{k}={v:.2f}" for k, v in sorted(orders.items())))

    def _build_geometry(self) -> None:
        g = self.scenario.geometry
        lay = self.scenario.layout
        self.grid = build_annulus_grid(g.r_inner, g.r_outer, g.n_radial, g.n_angular)
        self.layout = build_control_layout(self.grid, lay.omega, lay.sigma_angle, lay.lambda_halfwidth, strict=lay.strict)
        self.basis = cohomology_basis(self.grid)
        checks = verify_layout(self.layout)
        self.report["geometry"] = {**g.model_dump(), "spacing": self.grid.spacing}
        self.report["layout"] = {
            "omega": list(self.layout.omega),
            "sigma_angle": self.layout.sigma_angle,
            "lambda_halfwidth": self.layout.lambda_halfwidth,
            "d_lambda": self.layout.d_lambda,
            "c_star": self.layout.c_star,
            "failures": list(self.layout.failures),
            "checks": checks.get("checks", {}),
        }

    def _build_profile(self) -> None:
        s = self.solver
        self.profile = assemble_flushing_profile(
            self.grid, self.layout, s.a, s.samples_per_period, s.rk_substeps, verify=s.verify_profile
        )
        self.report["profile"] = self.profile.summary()
        self.writer.write_json("profile.json", self.report["profile"])
        if self.profile.flow is not None:
            flushing = verify_flushing(self.profile.flow, self.layout)
            self.writer.write_table("crossing_times.csv", flushing["table"])
            if self.scenario.mode != "flush-demo":
                dragging = verify_dragging(self.profile.flow, self.profile.subintervals(), 0.5 * self.layout.d_lambda)
                self.writer.write_table("dragging.csv", dragging["table"])

    def _gronwall(self) -> None:
        """Flow deviation under a nu/2 perturbation of y* against the Gronwall bound"""
        profile = self.profile
        if not np.isfinite(profile.nu) or profile.nu <= 0.0:
            return
        times = profile.times()
        y = profile.velocity_series(times)
        q = self.basis.q
        size = 0.5 * profile.nu
        bump = q * (size / q.sup())
        perturbed = SampledDrift(
            VectorField(self.grid, y.x + bump.x[None], y.y + bump.y[None], times), profile.rk_substeps
        )
        reference = SampledDrift(y, profile.rk_substeps)
        ends = np.sort(self.rng.uniform(0.0, 1.0, size=(GRONWALL_PAIRS, 2)), axis=1)
        pairs = [(float(s), float(t)) for s, t in ends if t > s]
        integrated = profile.diagnostics.get("integrated_lipschitz")
        table = gronwall_check(reference, perturbed, pairs, size, profile.lipschitz, integrated)
        self.report["gronwall"] = table.to_dict(orient="records")
        self.writer.write_table("gronwall.csv", table)

    def _load_data(self) -> None:
        data = self.scenario.data
        self.u0 = catalog_field(data.u0, self.grid)
        self.B0 = catalog_field(data.B0, self.grid)
        self.uT = catalog_field(data.uT, self.grid)
        self.BT = catalog_field(data.BT, self.grid)
        self.report["data"] = {
            "u0_sup": self.u0.sup(),
            "B0_sup": self.B0.sup(),
            "uT_sup": self.uT.sup(),
            "BT_sup": self.BT.sup(),
            "B0_projection": float(self.basis.project(self.B0)),
        }
        identities = {"gpm": self._gpm_identity()}
        if self.B0.sup() > 0.0:
            identities["eta_hat"] = self._eta_hat_identity()
        self.report["identities"] = identities

    def _gpm_identity(self) -> Dict:
        """G(z, z) for seeded random divergence-free fields, relative to |curl z|^2"""
        worst = 0.0
        for k in range(GPM_SAMPLES):
            z = random_field(self.grid, seed=int(self.rng.integers(0, 2**31 - 1)), n_modes=1 + k % 4)
            source, _ = gpm_source(z, z)
            worst = max(worst, source.sup() / max(curl2(z).sup() ** 2, 1e-300))
        return {"measured": worst, "tolerance": self.grid.spacing**2, "samples": GPM_SAMPLES}

    def _eta_hat_identity(self) -> Dict:
        profile = self.profile
        times = sample_times(0.0, profile.period, profile.K, self.solver.subinterval_samples)
        psi = advect_stream_frozen(profile.drift(), catalog_stream(self.scenario.data.B0, self.grid), times)
        return compare_eta_hat(psi, profile.velocity_series(times), self.layout, tolerance=self.solver.frozen_in_tol)

    def _return_config(self, mode: str) -> ReturnMethodConfig:
        s = self.solver
        return ReturnMethodConfig(
            mode=mode,
            k=s.weight_exponent,
            max_iters=s.max_iters,
            contraction_tol=s.contraction_tol,
            norm_stride=s.norm_stride,
            enforce_tube=s.enforce_tube,
            enforce_ladder=s.enforce_ladder,
            enforce_drift=s.enforce_drift,
        )

    def _divide_config(self) -> DivideConfig:
        s = self.solver
        return DivideConfig(
            version=s.version,
            subinterval_samples=s.subinterval_samples,
            mhd=self._return_config("mhd"),
            euler=self._return_config("euler-null"),
            lift=s.lift,
            residual_rel_tol=s.residual_rel_tol,
            frozen_in_tol=s.frozen_in_tol,
            annihilation_rtol=s.annihilation_rtol,
            floor_factor=s.floor_factor,
            max_steps=s.max_steps,
            enforce_ladder=s.enforce_ladder,
            enforce_annihilation=s.enforce_annihilation,
        )

    def _return_method(self) -> GlobalSolution:
        mode = "mhd" if self.B0.sup() > 0.0 else "euler-null"
        result = run_return_method(self.u0, self.B0, self.profile, self._return_config(mode), self.basis)
        pieces = assemble_Xi(result.V, result.H, result.f, self.layout, self.basis, self.solver.lift, self.solver.residual_rel_tol)
        self.writer.write_table("convergence.csv", result.log)
        if mode == "euler-null":
            self.report["euler"] = {
                "data_size": self.u0.sup(),
                "final_sup": float(np.max(result.V.magnitude()[-1])),
                "log": result.log.to_dict(orient="records"),
                "converged": result.converged,
            }
        self.report["return_method"] = {"mode": mode, "converged": result.converged, **pieces.diagnostics}
        self.report["magnetic_phase_end"] = float(result.times[-1])
        zero = VectorField.zeros(self.grid, result.times)
        segment = TrajectorySegment("return", "return", result.V, result.H, pieces.P, pieces.Xi, zero)
        return GlobalSolution.from_segments([segment], metadata={"mode": mode})

    def _divide_report(self, result: DivideResult, label: str) -> Dict:
        self.writer.write_table(f"{label}_steps.csv", result.log)
        if result.euler is not None:
            self.writer.write_table(f"{label}_euler_convergence.csv", result.euler.log)
        return {
            "log": result.log.to_dict(orient="records"),
            "annihilation": result.annihilation,
            "zero_fractions": result.zero_fractions,
            "final": result.final,
        }

    def _quiet_windows(self, result: DivideResult, scale: float = 1.0, mirror: Optional[float] = None):
        """Intervals where eta must vanish, in the time units of the exported trajectory"""
        quiet = self.profile.period - 2.0 * self.profile.K0
        windows = []
        for sub in result.subintervals:
            a, b = float(sub.times[0]), float(sub.times[0]) + quiet
            if mirror is None:
                windows.append((scale * a, scale * b))
            else:
                windows.append((mirror - scale * b, mirror - scale * a))
        return windows

    def _euler_report(self, result: DivideResult) -> Optional[Dict]:
        if result.euler is None:
            return None
        return {
            "data_size": float(result.euler.V.at(0).sup()),
            "final_sup": float(np.max(result.euler.V.magnitude()[-1])),
            "log": result.euler.log.to_dict(orient="records"),
            "converged": result.euler.converged,
        }

    def _full_null_control(self) -> GlobalSolution:
        result = run_divide_and_control(self.u0, self.B0, self.profile, self._divide_config(), self.basis)
        self.report["divide"] = {**self._divide_report(result, "divide"), "quiet_windows": self._quiet_windows(result)}
        euler = self._euler_report(result)
        if euler:
            self.report["euler"] = euler
        self.report["magnetic_phase_end"] = 1.0
        return result.solution

    def _full_two_point(self) -> GlobalSolution:
        s = self.solver
        T = s.horizon
        data_size = max(self.u0.sup() + self.B0.sup(), self.uT.sup() + self.BT.sup())
        with phase("gluing"):
            eps = choose_epsilon(data_size, s.delta0, T)
        cfg = self._divide_config()
        with phase("divide-and-control"):
            forward = run_divide_and_control(self.u0 * eps, self.B0 * eps, self.profile, cfg, self.basis)
            backward = None
            if self.uT.sup() + self.BT.sup() > 0.0:
                backward = run_divide_and_control(-(self.uT * eps), -(self.BT * eps), self.profile, cfg, self.basis)
        with phase("gluing"):
            tolerance = s.null_tolerance * max(eps * data_size, 1e-300)
            glued = glue_and_scale(forward.solution, backward.solution if backward else None, T, eps, tolerance)

            span = eps * forward.solution.times[-1]
            forward_part = glued.times <= span + 1e-12
            glued_residual = glued.residual()["momentum_relative"][forward_part][1:-1]
            base_residual = forward.solution.residual()["momentum_relative"][1:-1]
            ratio = float(np.max(glued_residual)) / max(float(np.max(base_residual)), 1e-300)
            u_end, B_end = glued.final_state()
            final_error = (u_end - self.uT).sup() + (B_end - self.BT).sup()
            jumps = glued.jumps
            max_jump = float(jumps[["u", "B", "p"]].to_numpy().max()) if len(jumps) else 0.0
            floor = annihilation_threshold(max(self.BT.sup(), self.B0.sup()), self.grid, s.annihilation_rtol, s.floor_factor)

        windows = self._quiet_windows(forward, eps)
        self.report["divide"] = {**self._divide_report(forward, "forward"), "quiet_windows": windows}
        if backward is not None:
            self.report["divide"]["quiet_windows"] = windows + self._quiet_windows(backward, eps, T)
            self.report["backward"] = self._divide_report(backward, "backward")
        euler = self._euler_report(forward)
        if euler:
            self.report["euler"] = euler
        self.report["gluing"] = {
            "eps": eps,
            "T": T,
            "residual_ratio": ratio,
            "max_jump": max_jump,
            "jump_tolerance": s.null_tolerance * data_size + 1e-12,
            "final_error": final_error,
            "final_tolerance": floor + 1e-12,
        }
        self.report["magnetic_phase_end"] = T
        return glued


def verify_bundle(path: Union[str, Path], against: Optional[Union[str, Path]] = None) -> Dict:
    """Re-check a bundle's criteria from its artifacts; writes verdict.json beside them"""
    bundle = load_bundle(path)
    other = load_bundle(against) if against else None
    result = verify_report(bundle, other)
    (Path(path) / VERDICT).write_text(to_json(result) + "\n", encoding="utf-8")
    return {"path": str(path), "passed": result["passed"], "verdict": result}


def run_scenario(scenario: Scenario, output_root: Optional[Union[str, Path]] = None, threads: Optional[int] = None) -> Dict:
    return ScenarioEngine(scenario, output_root, threads).run()


def calibrate(scenario: Scenario) -> Dict:
    """Geometry, layout and flushing profile summary without writing a bundle"""
    g, lay, s = scenario.geometry, scenario.layout, scenario.solver
    with phase("geometry"):
        grid = build_annulus_grid(g.r_inner, g.r_outer, g.n_radial, g.n_angular)
        layout = build_control_layout(grid, lay.omega, lay.sigma_angle, lay.lambda_halfwidth, strict=lay.strict)
    with phase("profile"):
        profile = assemble_flushing_profile(grid, layout, s.a, s.samples_per_period, s.rk_substeps, verify=s.verify_profile)
    return {"spacing": grid.spacing, "d_lambda": layout.d_lambda, "c_star": layout.c_star, **profile.summary()}
