"""Coarse control grid of velocity vectors and its trilinear upsampling to the image grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from spatial_transform import sample_channels
from volume_io import GridSpec, VectorField, VectorKind


@dataclass(frozen=True)
class ControlGrid:
    """Velocity (voxel units) at mx*my*mz control points spanning [0, n-1] on each axis."""

    params: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.array(self.params, dtype=np.float64, copy=True)
        if arr.ndim != 4 or arr.shape[3] != 3 or min(arr.shape[:3]) < 2:
            raise ValueError(f"control grid params must have shape (mx, my, mz, 3) with m >= 2, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "params", arr)

    @classmethod
    def zeros(cls, shape: Tuple[int, int, int]) -> "ControlGrid":
        return cls(np.zeros(tuple(shape) + (3,)))

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.params.shape[:3]

    @property
    def size(self) -> int:
        return self.params.size

    def flat(self) -> np.ndarray:
        return self.params.ravel().copy()

    def with_flat(self, values: np.ndarray) -> "ControlGrid":
        return ControlGrid(np.asarray(values, dtype=np.float64).reshape(self.params.shape))


def _sample_at(params: np.ndarray, axis_coords) -> np.ndarray:
    mesh = np.stack(np.meshgrid(*axis_coords, indexing="ij"), axis=0)
    return sample_channels(params, mesh)


def upsample_control(cg: ControlGrid, grid: GridSpec) -> VectorField:
    axis_coords = [np.arange(n, dtype=np.float64) * (m - 1) / (n - 1) for n, m in zip(grid.shape, cg.shape)]
    return VectorField(grid, VectorKind.VELOCITY, _sample_at(cg.params, axis_coords))


def promote(cg: ControlGrid, finer_shape: Tuple[int, int, int], grid: GridSpec) -> ControlGrid:
    """Evaluate the dense field represented by ``cg`` at the control points of a finer grid."""

    axis_coords = []
    for n, m_coarse, m_fine in zip(grid.shape, cg.shape, finer_shape):
        image_pos = np.linspace(0.0, n - 1, m_fine)
        axis_coords.append(image_pos * (m_coarse - 1) / (n - 1))
    return ControlGrid(_sample_at(cg.params, axis_coords))
