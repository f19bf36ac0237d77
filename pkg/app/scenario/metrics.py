"""Acceptance criteria of a scenario bundle.

Each criterion reports {measured, threshold, status}. Criteria that need an
observed order under refinement read the ``refinement`` section of the report
and are "insufficient data" without it.
"""

import logging
import math
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from app.fields.base import VectorField
from app.fields.cohomology import cohomology_basis
from app.fields.norms import l2_norm
from app.fields.operators import flux_divergence
from app.scenario.exports import trajectory_fields

logger = logging.getLogger(__name__)

PASS = "pass"
FAIL = "fail"
INSUFFICIENT = "insufficient data"
NOT_APPLICABLE = "not applicable"

SOLVER_RTOL = 1e-8
LOCALIZATION_PHI_TOL = 1e-12
XI_LEAK_RTOL = 1e-3
EULER_NULL_RTOL = 1e-2
Y_RATIO_BOUND = 0.9
DRAGGING_MARGIN = 0.1
ETA_HAT_CANCELLATION = 1e-10
GPM_FACTOR = 10.0
RESIDUAL_RATIO = 2.0
EULER_ORDER = 1.0
ANNIHILATION_ORDER = 1.0
ETA_HAT_ORDER = 1.8
DIVERGENCE_FACTOR = 1.8
STENCILS = ("spectral", "local")


def _entry(criterion: str, measured, threshold, status: str, note: str = "") -> Dict:
    return {
        "criterion": criterion,
        "measured": measured,
        "threshold": threshold,
        "status": status,
        "pass": status != FAIL,
        "note": note,
    }


def _status(passed: bool) -> str:
    return PASS if passed else FAIL


def _number(value, default=float("nan")) -> float:
    """Report values may come back from JSON as strings ('nan', 'inf')"""
    if value is None:
        return default
    try:
        return float(value)
    except (TypeError, ValueError):
        return default


def _refined_status(single_ok: bool, refined: Optional[Dict], check: Callable[[Dict], bool]) -> str:
    """Single-resolution failures fail; otherwise the refinement decides"""
    if not single_ok:
        return FAIL
    if refined is None:
        return INSUFFICIENT
    return _status(check(refined))


def omega_mask(theta: np.ndarray, omega) -> np.ndarray:
    w0, w1 = float(omega[0]), float(omega[1])
    u = np.mod(theta - w0, 2.0 * np.pi)
    return (u > 0.0) & (u < w1 - w0)


def constraint_defects(F: VectorField) -> Dict[str, float]:
    """Relative |F.n| on the circles and relative flux divergence.

    The divergence of each sample is taken with whichever stencil gives the
    smaller value, so a field rebuilt as grad_perp of a stream (plus Q) under
    either stencil measures at roundoff.
    """
    scale = max(F.sup(), 1e-300)
    per_stencil = [np.max(np.abs(flux_divergence(F, s).values), axis=(-2, -1)) for s in STENCILS]
    divergence = float(np.max(np.minimum(*per_stencil)))
    return {"normal": F.normal_defect() / scale, "divergence": divergence / scale}


def observed_order(coarse: float, fine: float, scale: float = 2.0) -> float:
    """log(coarse / fine) / log(scale); inf when the fine value is exactly zero"""
    coarse, fine = _number(coarse), _number(fine)
    if not (np.isfinite(coarse) and np.isfinite(fine)):
        return float("nan")
    if fine <= 0.0:
        return float("inf")
    if coarse <= 0.0:
        return float("-inf")
    return math.log(coarse / fine) / math.log(scale)


class VerificationMetrics:
    """Acceptance criteria of a scenario bundle, each {measured, threshold, status}"""

    def __init__(self, bundle: Dict):
        self.bundle = bundle
        self.report = bundle["report"]
        self.mode = self.report.get("mode")
        self.fields = trajectory_fields(bundle["trajectory"]) if bundle.get("trajectory") is not None else None
        self.spacing = _number(self.report.get("geometry", {}).get("spacing"))

    def _refined(self, key: str) -> Optional[Dict]:
        """Coarse and fine values of one quantity with its observed order, if the run was refined"""
        refinement = self.report.get("refinement") or {}
        order = _number(refinement.get("orders", {}).get(key))
        if np.isnan(order):
            return None
        scale = _number(refinement.get("scale"), 2.0)
        return {
            "coarse": _number(refinement.get("coarse", {}).get(key)),
            "fine": _number(refinement.get("fine", {}).get(key)),
            "order": order,
            "factor": scale**order,
        }

    def calculate_flushing_profile(self) -> Dict:
        profile = self.report.get("profile")
        if not profile or "flushing_passed" not in profile:
            return _entry("flushing_profile", None, None, INSUFFICIENT, "profile was not certified")
        geometry = self.report["geometry"]
        r1, r2 = geometry["r_inner"], geometry["r_outer"]
        a, M, K = _number(profile["a"]), _number(profile["M"]), int(profile["K"])
        predicted = max(2, math.ceil(2.0 * math.pi * r2**2 * math.log(r2 / r1) / (a * M)) + 1)
        margin = _number(profile.get("dragging_margin"))
        passed = bool(profile["flushing_passed"]) and margin >= DRAGGING_MARGIN and predicted == K
        return _entry(
            "flushing_profile",
            {"K": K, "K_closed_form": predicted, "dragging_margin": margin, "flushing": profile["flushing_passed"]},
            {"dragging_margin": DRAGGING_MARGIN},
            _status(passed),
        )

    def calculate_euler_null_control(self) -> Dict:
        euler = self.report.get("euler")
        if not euler:
            return _entry("euler_null_control", None, None, NOT_APPLICABLE, "no Euler null phase in this run")
        amplitude = _number(euler.get("data_size"))
        final = _number(euler.get("final_sup"))
        threshold = EULER_NULL_RTOL * amplitude + 1e-300
        ratios = [_number(row.get("ratio")) for row in euler.get("log", []) if int(row["iteration"]) > 2]
        ratios = [r for r in ratios if np.isfinite(r)]
        contraction = all(r < Y_RATIO_BOUND for r in ratios)
        refined = self._refined("euler_final_sup")
        return _entry(
            "euler_null_control",
            {
                "final_sup": final,
                "worst_ratio": max(ratios) if ratios else None,
                "order": refined["order"] if refined else None,
            },
            {"final_sup": threshold, "ratio": Y_RATIO_BOUND, "order": EULER_ORDER},
            _refined_status(final <= threshold and contraction, refined, lambda r: r["order"] >= EULER_ORDER),
            "" if refined else "observed order needs a refined run",
        )

    def _magnetic_samples(self) -> np.ndarray:
        times = self.fields["u"].times
        end = _number(self.report.get("magnetic_phase_end"), float(times[-1]))
        return times <= end + 1e-12

    def calculate_cohomology_conservation(self) -> Dict:
        if self.fields is None:
            return _entry("cohomology_conservation", None, None, INSUFFICIENT, "no trajectory")
        B = self.fields["B"]
        basis = cohomology_basis(self.fields["grid"])
        pick = self._magnetic_samples()
        projections = np.atleast_1d(basis.project(B))[pick]
        drift = float(np.max(np.abs(projections - projections[0]))) if projections.size else 0.0
        threshold = SOLVER_RTOL * l2_norm(B.at(0)) + 1e-12
        return _entry("cohomology_conservation", drift, threshold, _status(drift <= threshold))

    def calculate_constraint_preservation(self) -> Dict:
        if self.fields is None:
            return _entry("constraint_preservation", None, None, INSUFFICIENT, "no trajectory")
        tolerance = SOLVER_RTOL
        measured = {}
        failed = False
        unrefined = []
        for name in ("u", "B"):
            defects = constraint_defects(self.fields[name])
            measured[f"{name}_normal"] = defects["normal"]
            measured[f"{name}_divergence"] = defects["divergence"]
            failed = failed or defects["normal"] > tolerance
            if defects["divergence"] <= tolerance:
                continue
            # not a reconstructed field: the divergence must shrink at the discretization order
            refined = self._refined(f"{name}_divergence")
            if refined is None:
                unrefined.append(name)
            else:
                measured[f"{name}_divergence_factor"] = refined["factor"]
                failed = failed or refined["factor"] < DIVERGENCE_FACTOR
        status = FAIL if failed else (INSUFFICIENT if unrefined else PASS)
        note = f"refinement factor needed for {', '.join(unrefined)}" if unrefined and not failed else ""
        return _entry(
            "constraint_preservation",
            measured,
            {"normal": tolerance, "divergence": tolerance, "divergence_factor": DIVERGENCE_FACTOR},
            status,
            note,
        )

    def calculate_magnetic_annihilation(self) -> Dict:
        divide = self.report.get("divide")
        if not divide:
            return _entry("magnetic_annihilation", None, None, NOT_APPLICABLE, "no divide-and-control phase")
        annihilation = divide["annihilation"]
        if not annihilation.get("complete", False):
            return _entry("magnetic_annihilation", None, None, INSUFFICIENT, "run stopped before K sub-steps")
        final = _number(annihilation["final_sup"])
        threshold = _number(annihilation["threshold"])
        fraction = _number(annihilation["zero_fraction"])
        refined = self._refined("annihilation_final_sup")
        return _entry(
            "magnetic_annihilation",
            {"final_sup": final, "zero_fraction": fraction, "order": refined["order"] if refined else None},
            {"final_sup": threshold, "zero_fraction": 1.0, "order": ANNIHILATION_ORDER},
            _refined_status(
                final <= threshold and fraction >= 1.0 - 1e-12, refined, lambda r: r["order"] >= ANNIHILATION_ORDER
            ),
            "" if refined else "floor decay needs a refined run",
        )

    def calculate_control_localization(self) -> Dict:
        divide = self.report.get("divide")
        if self.fields is None or not divide:
            return _entry("control_localization", None, None, NOT_APPLICABLE, "no divide-and-control phase")
        grid = self.fields["grid"]
        eta = self.fields["eta"]
        xi = self.fields["xi"]
        times = eta.times
        outside = ~omega_mask(grid.TH, self.report["layout"]["omega"])
        eta_mag = eta.magnitude()
        eta_outside = float(np.max(eta_mag[..., outside])) if np.any(outside) else 0.0

        quiet = np.zeros(len(times), dtype=bool)
        for start, end in divide.get("quiet_windows", []):
            quiet |= (times > start + 1e-12) & (times < end - 1e-12)
        eta_quiet = float(np.max(eta_mag[quiet])) if np.any(quiet) else 0.0

        steps = divide.get("log", [])
        phi = max((_number(row.get("phi_on_circles"), 0.0) for row in steps), default=0.0)
        pick = self._magnetic_samples()
        xi_scale = max(float(np.max(xi.magnitude()[pick])), 1e-300)
        xi_leak = float(np.max(xi.magnitude()[pick][..., outside])) / xi_scale if np.any(outside) else 0.0
        passed = eta_outside == 0.0 and eta_quiet == 0.0 and phi <= LOCALIZATION_PHI_TOL and xi_leak <= XI_LEAK_RTOL
        return _entry(
            "control_localization",
            {"eta_outside_omega": eta_outside, "eta_before_window": eta_quiet, "phi_on_circles": phi, "xi_leak": xi_leak},
            {"eta_outside_omega": 0.0, "eta_before_window": 0.0, "phi_on_circles": LOCALIZATION_PHI_TOL, "xi_leak": XI_LEAK_RTOL},
            _status(passed),
        )

    def calculate_eta_hat_identity(self) -> Dict:
        identity = self.report.get("identities", {}).get("eta_hat")
        if not identity:
            return _entry("eta_hat_identity", None, None, NOT_APPLICABLE, "no magnetic data")
        cancellation = _number(identity["cancellation"])
        refined = self._refined("eta_hat_mismatch")
        return _entry(
            "eta_hat_identity",
            {
                "cancellation": cancellation,
                "mismatch_relative": _number(identity["mismatch_relative"]),
                "order": refined["order"] if refined else None,
            },
            {"cancellation": ETA_HAT_CANCELLATION, "order": ETA_HAT_ORDER},
            _refined_status(cancellation <= ETA_HAT_CANCELLATION, refined, lambda r: r["order"] >= ETA_HAT_ORDER),
            "" if refined else "mismatch order needs a refined run",
        )

    def calculate_gpm_identity(self) -> Dict:
        gpm = self.report.get("identities", {}).get("gpm")
        if not gpm:
            return _entry("gpm_identity", None, None, INSUFFICIENT, "identity not sampled")
        measured = _number(gpm["measured"])
        threshold = GPM_FACTOR * _number(gpm["tolerance"])
        return _entry("gpm_identity", measured, threshold, _status(measured <= threshold))

    def calculate_scaling_and_gluing(self) -> Dict:
        gluing = self.report.get("gluing")
        if not gluing:
            return _entry("scaling_and_gluing", None, None, NOT_APPLICABLE, "single-phase run")
        ratio = _number(gluing["residual_ratio"])
        jumps = _number(gluing["max_jump"])
        final_error = _number(gluing["final_error"])
        jump_tol = _number(gluing["jump_tolerance"])
        floor = _number(gluing["final_tolerance"])
        passed = ratio <= RESIDUAL_RATIO and jumps <= jump_tol and final_error <= floor
        return _entry(
            "scaling_and_gluing",
            {"residual_ratio": ratio, "max_jump": jumps, "final_error": final_error},
            {"residual_ratio": RESIDUAL_RATIO, "max_jump": jump_tol, "final_error": floor},
            _status(passed),
        )

    def calculate_gronwall_stability(self) -> Dict:
        rows = self.report.get("gronwall")
        if not rows:
            return _entry("gronwall_stability", None, None, INSUFFICIENT, "no sampled pairs")
        table = pd.DataFrame(rows)
        worst = float((table["measured"] / table["bound"].clip(lower=1e-300)).max())
        return _entry("gronwall_stability", worst, 1.0, _status(bool(table["pass"].astype(bool).all())))

    def calculate_determinism(self, other: Optional[Dict] = None) -> Dict:
        if other is None:
            return _entry("determinism", None, None, INSUFFICIENT, "needs a second bundle to compare")
        ours = {e["file"]: e["sha256"] for e in self.bundle["manifest"]["files"]}
        theirs = {e["file"]: e["sha256"] for e in other["manifest"]["files"]}
        shared = sorted(set(ours) & set(theirs))
        differing = [name for name in shared if ours[name] != theirs[name]]
        return _entry("determinism", differing, [], _status(bool(shared) and not differing))

    def calculate_all_metrics(self, other: Optional[Dict] = None) -> List[Dict]:
        return [
            self.calculate_flushing_profile(),
            self.calculate_euler_null_control(),
            self.calculate_cohomology_conservation(),
            self.calculate_constraint_preservation(),
            self.calculate_magnetic_annihilation(),
            self.calculate_control_localization(),
            self.calculate_eta_hat_identity(),
            self.calculate_gpm_identity(),
            self.calculate_scaling_and_gluing(),
            self.calculate_gronwall_stability(),
            self.calculate_determinism(other),
        ]


def verdict(criteria: List[Dict]) -> Dict:
    """Overall verdict: fails iff some criterion fails"""
    failed = [c["criterion"] for c in criteria if c["status"] == FAIL]
    return {"passed": not failed, "failed": failed, "criteria": criteria}


def verify_report(bundle: Dict, other: Optional[Dict] = None) -> Dict:
    result = verdict(VerificationMetrics(bundle).calculate_all_metrics(other))
    logger.info(
        "Verification of %s: %s",
        bundle.get("path"),
        "pass" if result["passed"] else f"fail ({', '.join(result['failed'])})",
    )
    return result
