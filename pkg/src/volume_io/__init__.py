"""Package for the volume data model and NIfTI-1 file I/O."""

from .nifti import VolumeKind, load_volume, save_volume
from .volumes import (
    DEFAULT_SPACING_MM,
    TENSOR_COMPONENTS,
    AnisotropicSpacingError,
    DimensionMismatchError,
    GridMismatchError,
    GridSpec,
    HeaderError,
    KindMismatchError,
    LabelVolume,
    NonFiniteDataError,
    ScalarVolume,
    TensorVolume,
    VectorField,
    VectorKind,
    Volume,
    VolumeError,
    assert_same_grid,
)

__all__ = [
    "DEFAULT_SPACING_MM",
    "TENSOR_COMPONENTS",
    "AnisotropicSpacingError",
    "DimensionMismatchError",
    "GridMismatchError",
    "GridSpec",
    "HeaderError",
    "KindMismatchError",
    "LabelVolume",
    "NonFiniteDataError",
    "ScalarVolume",
    "TensorVolume",
    "VectorField",
    "VectorKind",
    "Volume",
    "VolumeError",
    "VolumeKind",
    "assert_same_grid",
    "load_volume",
    "save_volume",
]
