"""Sub-interval annihilation algorithms, registered by version."""

from .base import SubintervalAlgorithm, SubintervalInputs, SubintervalSolution
from .version1 import CutoffSplitting
from .version2 import RegularityCorrector

ALGORITHMS = {
    'v1': CutoffSplitting,
    'v2': RegularityCorrector,
}

__all__ = [
    'SubintervalAlgorithm',
    'SubintervalInputs',
    'SubintervalSolution',
    'CutoffSplitting',
    'RegularityCorrector',
    'ALGORITHMS',
]
