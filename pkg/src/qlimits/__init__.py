"""Quenched limit-theorem experiments for random transfer-operator cocycles."""

__version__ = "0.1.0"

from .base import BaseSystem, OmegaPath, derive_seed, sample_path
from .density import GridDensity
from .maps import (LYConstants, MapFamily, PiecewiseLinearMap, SmoothCircleMap,
                   doubling_map, ly_constants, scaling_map, validate_scenario)
from .observables import Observable, make_observable
from .ulam import TwistedCocycle, TwistWeight, UlamOperator, apply, build_ulam, compose_apply

__all__ = [
    "BaseSystem", "OmegaPath", "derive_seed", "sample_path",
    "GridDensity",
    "LYConstants", "MapFamily", "PiecewiseLinearMap", "SmoothCircleMap",
    "doubling_map", "ly_constants", "scaling_map", "validate_scenario",
    "Observable", "make_observable",
    "TwistedCocycle", "TwistWeight", "UlamOperator", "apply", "build_ulam",
    "compose_apply",
    "__version__",
]
