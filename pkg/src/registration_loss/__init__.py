"""Package for the registration loss: NCC, EDS, bending energy and their weighted sum."""

from .terms import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_LAMBDA,
    DegenerateInputError,
    LossReport,
    LossWeights,
    bending_energy,
    eds,
    ncc,
    total_loss,
)

__all__ = [
    "DEFAULT_ALPHA",
    "DEFAULT_BETA",
    "DEFAULT_LAMBDA",
    "DegenerateInputError",
    "LossReport",
    "LossWeights",
    "bending_energy",
    "eds",
    "ncc",
    "total_loss",
]
