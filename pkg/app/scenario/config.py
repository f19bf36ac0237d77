"""Scenario files: pydantic models for the TOML sections and their loader."""

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.errors import ScenarioConfigError

logger = logging.getLogger(__name__)

Mode = Literal["flush-demo", "return-method", "full-null-control", "full-two-point", "verify-only"]
MODES = ("flush-demo", "return-method", "full-null-control", "full-two-point", "verify-only")
FieldKind = Literal["zero", "sector_bump", "sine_stream", "rotated_gaussian"]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometryConfig(StrictModel):
    r_inner: float = Field(1.0, gt=0.0)
    r_outer: float = 2.0
    n_radial: int = 64
    n_angular: int = 128

    @model_validator(mode="after")
    def _ordered(self):
        if self.r_outer <= self.r_inner:
            raise ValueError("r_outer must exceed r_inner")
        return self


class LayoutConfig(StrictModel):
    omega: Tuple[float, float] = (0.4, 2.0 * np.pi - 0.4)
    sigma_angle: float = float(np.pi)
    lambda_halfwidth: float = 0.4
    strict: bool = True


class FieldSpec(StrictModel):
    """Catalog entry with its amplitude and shape parameters"""

    kind: FieldKind = "zero"
    amplitude: float = Field(0.0, ge=0.0)
    mode: int = Field(1, ge=0)
    center_angle: float = float(np.pi)
    center_radius: Optional[float] = None
    width: float = Field(0.6, gt=0.0)
    radial_width: Optional[float] = None
    rotation: float = 0.0


class DataConfig(StrictModel):
    u0: FieldSpec = Field(default_factory=FieldSpec)
    B0: FieldSpec = Field(default_factory=FieldSpec)
    uT: FieldSpec = Field(default_factory=FieldSpec)
    BT: FieldSpec = Field(default_factory=FieldSpec)


class SolverConfig(StrictModel):
    a: float = Field(1.0, gt=0.0)
    samples_per_period: int = Field(8, ge=2)
    subinterval_samples: int = Field(64, ge=8)
    rk_substeps: int = Field(8, ge=1)
    weight_exponent: int = Field(32, ge=1)
    max_iters: int = Field(4, ge=1)
    contraction_tol: float = Field(1e-4, gt=0.0)
    norm_stride: int = Field(4, ge=1)
    version: Literal["v1", "v2"] = "v1"
    lift: Literal["global", "cutoff"] = "global"
    # None: derived from grid spacing and time step
    residual_rel_tol: Optional[float] = Field(None, gt=0.0)
    frozen_in_tol: Optional[float] = Field(None, gt=0.0)
    annihilation_rtol: float = Field(1e-6, ge=0.0)
    floor_factor: float = Field(5.0, ge=0.0)
    max_steps: Optional[int] = Field(None, ge=0)
    horizon: float = Field(2.0, gt=0.0)
    null_tolerance: float = Field(1e-2, gt=0.0)
    delta0: float = float("inf")
    enforce_tube: bool = False
    enforce_ladder: bool = False
    enforce_drift: bool = False
    enforce_annihilation: bool = False
    verify_profile: bool = True
    threads: int = Field(1, ge=1)


class Scenario(StrictModel):
    name: str = "scenario"
    mode: Mode = "flush-demo"
    seed: int = 0
    output_dir: Optional[str] = None
    bundle: Optional[str] = None
    snapshots: int = Field(5, ge=0)
    vtk: bool = True
    # also run at twice the resolution and report observed orders
    refinement: bool = False
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    layout: LayoutConfig = Field(default_factory=LayoutConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)

    @model_validator(mode="after")
    def _bundle_for_verify(self):
        if self.mode == "verify-only" and not self.bundle:
            raise ValueError("verify-only needs a bundle path")
        return self

    def rescaled(self, scale: float) -> "Scenario":
        """Copy with grid counts and time samples multiplied by scale"""
        if scale <= 0.0:
            raise ValueError("resolution scale must be positive")
        if scale == 1.0:
            return self
        geometry = self.geometry.model_copy(
            update={
                "n_radial": max(int(round(self.geometry.n_radial * scale)), 2),
                "n_angular": 2 * max(int(round(self.geometry.n_angular * scale / 2)), 1),
            }
        )
        solver = self.solver.model_copy(
            update={
                "samples_per_period": max(int(round(self.solver.samples_per_period * scale)), 2),
                "subinterval_samples": max(int(round(self.solver.subinterval_samples * scale)), 8),
            }
        )
        return self.model_copy(update={"geometry": geometry, "solver": solver})


def _key_path(loc) -> str:
    return ".".join(str(part) for part in loc)


def parse_scenario(raw: dict) -> Scenario:
    """Validate a parsed mapping; the first failing key path goes into the error"""
    try:
        return Scenario.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        key_path = _key_path(first["loc"])
        raise ScenarioConfigError(f"{key_path}: {first['msg']}", key_path) from e


def load_config(path: Union[str, Path]) -> Scenario:
    """Read and validate a TOML scenario file"""
    path = Path(path)
    if not path.is_file():
        raise ScenarioConfigError(f"scenario file not found: {path}")
    try:
        with path.open("rb") as handle:
            raw = tomllib.load(handle)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioConfigError(f"cannot parse {path}: {e}") from e
    scenario = parse_scenario(raw)
    logger.info("Loaded scenario %s (mode %s) from %s", scenario.name, scenario.mode, path)
    return scenario
