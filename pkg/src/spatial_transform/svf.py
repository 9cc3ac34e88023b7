"""Stationary velocity field algebra: smoothing, scaling and squaring, composition, Jacobians."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from volume_io import (
    DimensionMismatchError,
    GridSpec,
    ScalarVolume,
    VectorField,
    VectorKind,
    assert_same_grid,
)

from .trilinear import sample_channels, voxel_coordinates

DEFAULT_STEPS = 7
DEFAULT_SIGMA_MM = 1.2


@dataclass(frozen=True)
class JacobianField:
    """Per-voxel 3x3 matrix J = d(phi)/dx, stored with shape (nx, ny, nz, 3, 3), row-major."""

    grid: GridSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.shape != self.grid.shape + (3, 3):
            raise DimensionMismatchError(f"jacobian field: expected {self.grid.shape + (3, 3)}, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)


def gaussian_taps(sigma_vox: float) -> np.ndarray:
    """Normalised 3-tap kernel sampled from exp(-d^2 / 2 sigma^2) at d = -1, 0, 1."""

    if sigma_vox <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma_vox}")
    w = np.exp(-1.0 / (2.0 * sigma_vox**2))
    return np.array([w, 1.0, w]) / (1.0 + 2.0 * w)


def gaussian_smooth(v: VectorField, sigma_mm: float = DEFAULT_SIGMA_MM) -> VectorField:
    v.require(VectorKind.VELOCITY, "gaussian_smooth")
    taps = gaussian_taps(v.grid.mm_to_voxels(sigma_mm))
    out = np.array(v.data)
    for axis in range(3):
        out = correlate1d(out, taps, axis=axis, mode="nearest")
    return VectorField(v.grid, VectorKind.VELOCITY, out)


def _compose_arrays(outer: np.ndarray, inner: np.ndarray, identity: np.ndarray) -> np.ndarray:
    return inner + sample_channels(outer, identity + np.moveaxis(inner, -1, 0))


def compose(u_outer: VectorField, u_inner: VectorField) -> VectorField:
    """Displacement of phi_outer o phi_inner: u_inner(x) + u_outer(x + u_inner(x))."""

    assert_same_grid(u_outer, u_inner)
    u_outer.require(VectorKind.DISPLACEMENT, "compose")
    u_inner.require(VectorKind.DISPLACEMENT, "compose")
    identity = voxel_coordinates(u_outer.grid)
    return VectorField(u_outer.grid, VectorKind.DISPLACEMENT, _compose_arrays(u_outer.data, u_inner.data, identity))


def exp_svf(v: VectorField, steps: int = DEFAULT_STEPS) -> VectorField:
    """Scaling and squaring: u = v / 2^steps, then u <- u o u, ``steps`` times."""

    v.require(VectorKind.VELOCITY, "exp_svf")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    u = v.data / float(2**steps)
    identity = voxel_coordinates(v.grid)
    for _ in range(steps):
        u = _compose_arrays(u, u, identity)
    return VectorField(v.grid, VectorKind.DISPLACEMENT, u)


def jacobian(u: VectorField) -> JacobianField:
    """J = I + grad(u); central differences inside, one-sided on the faces."""

    u.require(VectorKind.DISPLACEMENT, "jacobian")
    jac = np.empty(u.grid.shape + (3, 3), dtype=np.float64)
    for a in range(3):
        grads = np.gradient(u.data[..., a], axis=(0, 1, 2), edge_order=1)
        for b in range(3):
            jac[..., a, b] = grads[b]
    jac += np.eye(3)
    return JacobianField(u.grid, jac)


def jacobian_determinant(J: JacobianField) -> ScalarVolume:
    return ScalarVolume(J.grid, np.linalg.det(J.data))
