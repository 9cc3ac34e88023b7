"""Package for direct velocity-field optimisation (the per-pair registration driver)."""

from .config import DEFAULT_LEVELS, PUBLISHED_FIELDS, RegistrationConfig
from .control_grid import ControlGrid, promote, upsample_control
from .optimizer import (
    NonFiniteLossError,
    RegistrationInputs,
    RegistrationResult,
    TraceEntry,
    WarpedMoving,
    central_differences,
    evaluate,
    fd_gradient,
    register,
    warp_moving,
)

__all__ = [
    "DEFAULT_LEVELS",
    "PUBLISHED_FIELDS",
    "ControlGrid",
    "NonFiniteLossError",
    "RegistrationConfig",
    "RegistrationInputs",
    "RegistrationResult",
    "TraceEntry",
    "WarpedMoving",
    "central_differences",
    "evaluate",
    "fd_gradient",
    "promote",
    "register",
    "upsample_control",
    "warp_moving",
]
