"""Stabilizing-set design of discrete PI/PID and model-free (iPD) controllers."""

from .lateralplant import REFERENCE_VEHICLE, DiscreteTF, StateSpace, VehicleParams, lateral_design_plant
from .mfcbridge import FilterConfig, IpdGains, PidGains, PiGains
from .polycore import Poly
from .tchebset import Kind, stabilizing_set

__all__ = [
    "REFERENCE_VEHICLE", "DiscreteTF", "StateSpace", "VehicleParams", "lateral_design_plant",
    "FilterConfig", "IpdGains", "PidGains", "PiGains", "Poly", "Kind", "stabilizing_set",
]
__version__ = "0.1.0"
