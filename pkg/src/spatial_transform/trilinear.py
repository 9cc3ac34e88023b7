"""Trilinear sampling and backward warping: out(x) = in(x + u(x)), clamp-to-edge."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.ndimage import map_coordinates

from volume_io import (
    GridSpec,
    LabelVolume,
    ScalarVolume,
    TensorVolume,
    VectorField,
    VectorKind,
    assert_same_grid,
)


def voxel_coordinates(grid: GridSpec) -> np.ndarray:
    """Identity sampling positions, shape (3, nx, ny, nz)."""

    return np.indices(grid.shape, dtype=np.float64)


def _clamped(coords: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    out = np.empty_like(coords)
    for axis, n in enumerate(shape):
        np.clip(coords[axis], 0.0, n - 1, out=out[axis])
    return out


def sample_channels(data: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Trilinear samples of a (nx,ny,nz) or (nx,ny,nz,C) array at continuous positions.

    ``coords`` has a leading axis of length 3; positions outside the volume are
    clamped onto the nearest face before interpolation.
    """

    coords = _clamped(np.asarray(coords, dtype=np.float64), data.shape[:3])
    if data.ndim == 3:
        return map_coordinates(data, coords, order=1, mode="nearest", prefilter=False)
    out = np.empty(coords.shape[1:] + (data.shape[3],), dtype=np.float64)
    for c in range(data.shape[3]):
        out[..., c] = map_coordinates(data[..., c], coords, order=1, mode="nearest", prefilter=False)
    return out


def sample_trilinear(vol: ScalarVolume, p: Sequence[float]) -> float:
    coords = np.asarray(p, dtype=np.float64).reshape(3, 1)
    return float(sample_channels(vol.data, coords)[0])


def _sampling_positions(grid: GridSpec, phi: VectorField, operation: str) -> np.ndarray:
    assert_same_grid(grid, phi)
    phi.require(VectorKind.DISPLACEMENT, operation)
    return voxel_coordinates(grid) + np.moveaxis(phi.data, -1, 0)


def warp_scalar(vol: ScalarVolume, phi: VectorField) -> ScalarVolume:
    coords = _sampling_positions(vol.grid, phi, "warp_scalar")
    return ScalarVolume(vol.grid, sample_channels(vol.data, coords))


def warp_tensor_components(vol: TensorVolume, phi: VectorField) -> TensorVolume:
    """Channel-wise warp of the six tensor entries; reorientation is a separate step."""

    coords = _sampling_positions(vol.grid, phi, "warp_tensor_components")
    return TensorVolume(vol.grid, sample_channels(vol.data, coords))


def warp_vector(field: VectorField, phi: VectorField) -> VectorField:
    coords = _sampling_positions(field.grid, phi, "warp_vector")
    return VectorField(field.grid, field.kind, sample_channels(field.data, coords))


def warp_labels_nearest(vol: LabelVolume, phi: VectorField) -> LabelVolume:
    """Nearest-neighbour label propagation; ties round half up."""

    coords = _sampling_positions(vol.grid, phi, "warp_labels_nearest")
    index = np.floor(_clamped(coords, vol.grid.shape) + 0.5).astype(np.intp)
    return LabelVolume(vol.grid, vol.data[index[0], index[1], index[2]])
