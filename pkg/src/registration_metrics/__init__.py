"""Package for evaluation metrics and QC snapshots."""

from .metrics import (
    DeformationStats,
    DiceReport,
    EndpointError,
    deformation_stats,
    dice,
    endpoint_error,
    fa_ssd,
)
from .snapshot import render_panel

__all__ = [
    "DeformationStats",
    "DiceReport",
    "EndpointError",
    "deformation_stats",
    "dice",
    "endpoint_error",
    "fa_ssd",
    "render_panel",
]
