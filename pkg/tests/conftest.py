import numpy as np
import pytest

from app.fields.cohomology import cohomology_basis
from app.geometry.grid import build_annulus_grid
from app.geometry.layout import build_control_layout
from app.profile.flushing import assemble_flushing_profile
from app.scenario.catalog import catalog_field
from app.scenario.config import FieldSpec

R_INNER = 1.0
R_OUTER = 1.5
OMEGA = (0.3, 2.0 * np.pi - 0.3)
SIGMA = np.pi
HALFWIDTH = 0.4


@pytest.fixture(scope="session")
def grid():
    return build_annulus_grid(R_INNER, R_OUTER, 12, 32)


@pytest.fixture(scope="session")
def fine_grid():
    return build_annulus_grid(R_INNER, R_OUTER, 40, 64)


@pytest.fixture(scope="session")
def layout(grid):
    return build_control_layout(grid, OMEGA, SIGMA, HALFWIDTH)


@pytest.fixture(scope="session")
def basis(grid):
    return cohomology_basis(grid)


@pytest.fixture(scope="session")
def profile(grid, layout):
    return assemble_flushing_profile(grid, layout, a=1.0, samples_per_period=2, rk_substeps=2)


@pytest.fixture
def sine_B(grid):
    return catalog_field(FieldSpec(kind="sine_stream", amplitude=1e-3, mode=1), grid)


@pytest.fixture
def sine_u(grid):
    return catalog_field(FieldSpec(kind="sine_stream", amplitude=1e-4, mode=2), grid)


def scenario_toml(name: str, mode: str, extra: str = "") -> str:
    """Scenario file on the small test annulus"""
    return f"""
name = "{name}"
mode = "{mode}"
snapshots = 2
vtk = false

[geometry]
r_inner = {R_INNER}
r_outer = {R_OUTER}
n_radial = 12
n_angular = 32

[layout]
omega = [{OMEGA[0]!r}, {OMEGA[1]!r}]
sigma_angle = {SIGMA!r}
lambda_halfwidth = {HALFWIDTH}

[solver]
samples_per_period = 2
rk_substeps = 2
subinterval_samples = 8
max_iters = 2
{extra}
"""
