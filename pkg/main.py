import logging
from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ConfigDict, Field

from app.errors import ControlLabError, ScenarioConfigError, ScenarioPhaseError
from app.scenario.catalog import CATALOG
from app.scenario.config import MODES, GeometryConfig, LayoutConfig, Scenario, SolverConfig, parse_scenario
from app.scenario.engine import calibrate, run_scenario, verify_bundle
from app.scenario.exports import to_plain
from app.settings import load_environment

logger = logging.getLogger(__name__)

load_environment()

app = FastAPI(title="Annulus MHD Control Lab", version="1.0.0")

# Enable CORS for a local dashboard
app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:3000"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

MODE_DESCRIPTIONS = {
    "flush-demo": "Calibrate the flushing profile; profile summary and crossing-time table only",
    "return-method": "Fixed-point return method from (u0, B0) over one time unit",
    "full-null-control": "Divide-and-control magnetic annihilation on [0, 1], Euler null control on [1, 2]",
    "full-two-point": "Scaled null-controlled runs from both ends glued through the zero state on [0, T]",
    "verify-only": "Re-check the acceptance criteria of an existing bundle",
}


class CalibrationRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    layout: LayoutConfig = Field(default_factory=LayoutConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)


class VerifyRequest(BaseModel):
    bundle: str
    against: Optional[str] = None


class RunResult(BaseModel):
    path: str
    passed: bool
    failed: List[str] = []
    criteria: List[Dict] = []


def _http_error(e: Exception) -> HTTPException:
    cause = e.cause if isinstance(e, ScenarioPhaseError) else e
    if isinstance(cause, ScenarioConfigError):
        return HTTPException(status_code=422, detail={"message": str(cause), "key_path": cause.key_path})
    if isinstance(e, ControlLabError):
        return HTTPException(status_code=400, detail=str(e))
    logger.exception("Unexpected failure")
    return HTTPException(status_code=500, detail=f"Run failed: {e}")


@app.get("/")
async def root():
    return {"message": "Annulus MHD Control Lab API"}


@app.get("/api/health")
async def health_check():
    """Health check endpoint"""
    return {"status": "healthy", "message": "Annulus MHD Control Lab is running"}


@app.get("/api/catalog")
async def get_catalog():
    """Analytic initial and target fields available to scenarios"""
    return {"fields": CATALOG}


@app.get("/api/modes")
async def get_modes():
    return {"modes": [{"id": mode, "description": MODE_DESCRIPTIONS[mode]} for mode in MODES]}


@app.post("/api/calibrate")
def post_calibrate(request: CalibrationRequest):
    """Geometry and layout to the calibrated flushing profile summary"""
    scenario = Scenario(geometry=request.geometry, layout=request.layout, solver=request.solver)
    try:
        return to_plain(calibrate(scenario))
    except Exception as e:
        raise _http_error(e)


@app.post("/api/run", response_model=RunResult)
def post_run(body: Dict):
    """Run a scenario given as a JSON body shaped like the TOML file"""
    try:
        scenario = parse_scenario(body)
        result = run_scenario(scenario)
    except Exception as e:
        raise _http_error(e)
    verdict = result.get("verdict", {})
    return RunResult(
        path=result["path"],
        passed=result["passed"],
        failed=verdict.get("failed", []),
        criteria=to_plain(verdict.get("criteria", [])),
    )


@app.post("/api/verify", response_model=RunResult)
def post_verify(request: VerifyRequest):
    try:
        result = verify_bundle(request.bundle, request.against)
    except Exception as e:
        raise _http_error(e)
    return RunResult(
        path=result["path"],
        passed=result["passed"],
        failed=result["verdict"]["failed"],
        criteria=to_plain(result["verdict"]["criteria"]),
    )
