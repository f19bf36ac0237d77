"""Exception hierarchy for the control lab.

Every error kind a solver stage can report has its own class so callers
(the scenario engine, the CLI and the HTTP layer) can dispatch on type.
"""

from typing import Optional


class ControlLabError(Exception):
    """Base class for all control-lab errors"""


class InvalidGeometryError(ControlLabError):
    """Annulus radii or grid counts violate the grid invariants"""


class LayoutInfeasibleError(ControlLabError):
    """A distance inequality of the control layout fails on the grid"""


class SolverFailureError(ControlLabError):
    """A linear solve returned non-finite values"""


class IncompatibleDataError(ControlLabError):
    """Neumann data violate the compatibility condition"""


class GridMismatchError(ControlLabError):
    """Two fields live on different grids"""


class NontangentialDriftError(ControlLabError):
    """A drift field has a normal component on the boundary circles"""


class SupportLeakError(ControlLabError):
    """A control is not supported in the control region"""


class CalibrationError(ControlLabError):
    """No admissible constant found during profile calibration"""


class FlushingViolationError(ControlLabError):
    """Some trajectory never passes through the cut within the window"""


class TubeViolationError(ControlLabError):
    """A fixed-point iterate left the weighted tube around y*"""


class NoContractionError(ControlLabError):
    """Successive fixed-point differences stopped decreasing"""


class CohomologyViolationError(ControlLabError):
    """The magnetic field has a nonzero first-cohomology projection"""


class ResidualExcessError(ControlLabError):
    """A PDE residual exceeds its tolerance"""


class BoundaryConstantError(ControlLabError):
    """A stream function is not zero on a boundary circle"""


class FrozenInViolationError(ControlLabError):
    """A stream function is not transported by the given drift"""


class OverlapFailureError(ControlLabError):
    """The corrector region leaves the control region"""


class AnnihilationFailureError(ControlLabError):
    """The magnetic field did not vanish after the sub-interval steps"""


class LadderViolationError(ControlLabError):
    """An endpoint norm exceeds the next rung of the smallness ladder"""


class PhaseMismatchError(ControlLabError):
    """A reference run used for gluing failed its null certification"""


class MissingArtifactError(ControlLabError):
    """A bundle lacks a file required for verification"""


class ScenarioConfigError(ControlLabError):
    """Scenario file could not be parsed or validated"""

    def __init__(self, message: str, key_path: Optional[str] = None):
        super().__init__(message)
        self.key_path = key_path


class ScenarioPhaseError(ControlLabError):
    """Wraps an error raised inside a scenario phase"""

    def __init__(self, phase: str, cause: Exception):
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")
        self.phase = phase
        self.cause = cause
