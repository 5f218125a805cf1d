"""Numerics for the broken ray transform on conformal surfaces with a reflecting obstacle."""

__version__ = "0.1.0"

from .errors import BrokenRayError, NumericalError, ValidationError  # noqa: E402
from .geometry import BoundaryCurve, ConformalSurface  # noqa: E402
from .raytrace import Scenario, trace_broken_ray, trace_rays  # noqa: E402
from .scenarios import load_scenario  # noqa: E402

__all__ = [
    "BoundaryCurve",
    "BrokenRayError",
    "ConformalSurface",
    "NumericalError",
    "Scenario",
    "ValidationError",
    "load_scenario",
    "trace_broken_ray",
    "trace_rays",
    "__version__",
]
