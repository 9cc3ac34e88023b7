"""Immutable volume containers shared by every registration stage."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np

DEFAULT_SPACING_MM = 1.5

# Fixed on-disk and in-memory order of the six unique tensor entries.
TENSOR_COMPONENTS = ("Dxx", "Dyy", "Dzz", "Dxy", "Dxz", "Dyz")


class VolumeError(ValueError):
    """Base class for data errors (bad files, wrong shapes, mismatched grids)."""


class GridMismatchError(VolumeError):
    pass


class DimensionMismatchError(VolumeError):
    pass


class HeaderError(VolumeError):
    pass


class AnisotropicSpacingError(VolumeError):
    pass


class NonFiniteDataError(VolumeError):
    pass


class KindMismatchError(VolumeError):
    pass


class VectorKind(str, enum.Enum):
    VELOCITY = "velocity"
    DISPLACEMENT = "displacement"


@dataclass(frozen=True)
class GridSpec:
    """Voxel counts plus isotropic spacing. All spatial maths runs in voxel units."""

    nx: int
    ny: int
    nz: int
    spacing_mm: float = DEFAULT_SPACING_MM

    def __post_init__(self) -> None:
        for name in ("nx", "ny", "nz"):
            value = getattr(self, name)
            if int(value) != value or value < 2:
                raise VolumeError(f"{name} must be an integer >= 2, got {value}")
            object.__setattr__(self, name, int(value))
        if not np.isfinite(self.spacing_mm) or self.spacing_mm <= 0:
            raise VolumeError(f"spacing_mm must be > 0, got {self.spacing_mm}")
        # float32, the precision of NIfTI pixdim
        object.__setattr__(self, "spacing_mm", float(np.float32(self.spacing_mm)))

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_voxels(self) -> int:
        return self.nx * self.ny * self.nz

    def linear_index(self, i: int, j: int, k: int) -> int:
        """x-fastest linear index of voxel (i, j, k)."""

        return i + self.nx * (j + self.ny * k)

    def voxel_index(self, index: int) -> Tuple[int, int, int]:
        i = index % self.nx
        j = (index // self.nx) % self.ny
        k = index // (self.nx * self.ny)
        return (i, j, k)

    def mm_to_voxels(self, value_mm: float) -> float:
        return value_mm / self.spacing_mm

    def describe(self) -> str:
        return f"({self.nx},{self.ny},{self.nz})@{self.spacing_mm:g}mm"


def _frozen_array(data, shape: Tuple[int, ...], dtype, what: str) -> np.ndarray:
    arr = np.array(data, dtype=dtype, copy=True)
    n_expected = int(np.prod(shape))
    if arr.shape != shape:
        if arr.ndim == 1 and arr.size == n_expected:
            # flat input: voxels x-fastest, channels interleaved per voxel
            if len(shape) == 4:
                arr = arr.reshape((-1, shape[3]))
            arr = arr.reshape(shape, order="F")
        else:
            raise DimensionMismatchError(f"{what}: expected shape {shape}, got {arr.shape}")
    if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
        raise NonFiniteDataError(f"{what}: data contains NaN or Inf values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarVolume:
    grid: GridSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", _frozen_array(self.data, self.grid.shape, np.float64, "scalar volume"))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarVolume":
        return cls(grid, np.zeros(grid.shape))

    def flat(self) -> np.ndarray:
        """Values in x-fastest linear order."""

        return self.data.ravel(order="F")


@dataclass(frozen=True)
class VectorField:
    """Three components per voxel in voxel units, tagged velocity or displacement."""

    grid: GridSpec
    kind: VectorKind
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", VectorKind(self.kind))
        object.__setattr__(self, "data", _frozen_array(self.data, self.grid.shape + (3,), np.float64, "vector field"))

    @classmethod
    def zeros(cls, grid: GridSpec, kind: VectorKind) -> "VectorField":
        return cls(grid, kind, np.zeros(grid.shape + (3,)))

    def require(self, kind: VectorKind, operation: str) -> "VectorField":
        if self.kind is not kind:
            raise KindMismatchError(f"{operation} expects a {kind.value} field, got {self.kind.value}")
        return self

    def flat(self) -> np.ndarray:
        return np.stack([self.data[..., c].ravel(order="F") for c in range(3)], axis=-1)


@dataclass(frozen=True)
class TensorVolume:
    """Six tensor entries per voxel in TENSOR_COMPONENTS order."""

    grid: GridSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", _frozen_array(self.data, self.grid.shape + (6,), np.float64, "tensor volume"))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "TensorVolume":
        return cls(grid, np.zeros(grid.shape + (6,)))

    def component(self, name: str) -> np.ndarray:
        return self.data[..., TENSOR_COMPONENTS.index(name)]


@dataclass(frozen=True)
class LabelVolume:
    """Non-negative integer labels, 0 is background."""

    grid: GridSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        raw = np.asarray(self.data)
        if np.issubdtype(raw.dtype, np.floating):
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                raise VolumeError("label volume: values must be integral")
        arr = _frozen_array(raw, self.grid.shape, np.int64, "label volume")
        if arr.size and arr.min() < 0:
            raise VolumeError("label volume: labels must be non-negative")
        object.__setattr__(self, "data", arr)

    def labels(self, include_background: bool = False) -> list[int]:
        present = [int(v) for v in np.unique(self.data)]
        return present if include_background else [v for v in present if v != 0]

    def flat(self) -> np.ndarray:
        return self.data.ravel(order="F")


Volume = Union[ScalarVolume, VectorField, TensorVolume, LabelVolume]


def assert_same_grid(a: Volume | GridSpec, b: Volume | GridSpec) -> None:
    grid_a = a if isinstance(a, GridSpec) else a.grid
    grid_b = b if isinstance(b, GridSpec) else b.grid
    if grid_a != grid_b:
        raise GridMismatchError(f"Grid mismatch: {grid_a.describe()} vs {grid_b.describe()}")
