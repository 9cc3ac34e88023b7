"""Finite-strain reorientation: rotate each warped tensor by the polar factor of the local Jacobian."""

from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np

from spatial_transform import jacobian
from volume_io import TensorVolume, VectorField, VectorKind, assert_same_grid

from .symtensor import TensorLike, from_matrix, to_matrix

logger = logging.getLogger(__name__)

SINGULAR_DET = 1e-8
POLAR_TOL = 1e-12
POLAR_MAX_ITER = 50


class ReorientationError(RuntimeError):
    """Jacobian unusable for polar decomposition at ``voxel`` (None for a lone matrix)."""

    def __init__(self, message: str, voxel: Optional[Tuple[int, ...]] = None, det: float = float("nan")):
        super().__init__(message)
        self.voxel = voxel
        self.det = det


class SingularJacobianError(ReorientationError):
    pass


class FoldingError(ReorientationError):
    pass


def _raise_for(mask: np.ndarray, det: np.ndarray, error: type, what: str) -> None:
    location = tuple(int(i) for i in np.argwhere(mask)[0])
    voxel = location if location else None
    where = f" at voxel {voxel}" if voxel else ""
    raise error(f"{what}{where}: det J = {det[location]:.3e}", voxel=voxel, det=float(det[location]))


def check_orientation(J: np.ndarray) -> None:
    """Raise if any matrix in the (..., 3, 3) stack is singular or orientation-reversing."""

    det = np.linalg.det(np.asarray(J, dtype=np.float64))
    singular = np.abs(det) < SINGULAR_DET
    if np.any(singular):
        _raise_for(singular, det, SingularJacobianError, "singular Jacobian")
    folded = det < 0
    if np.any(folded):
        _raise_for(folded, det, FoldingError, "folded deformation")


def polar_rotations(J: np.ndarray, *, strict: bool = True) -> Tuple[np.ndarray, int]:
    """Orthogonal polar factors of a stack of 3x3 matrices, shape (..., 3, 3).

    Newton iteration R <- (R + R^-T) / 2 from R = J. In strict mode a singular or
    orientation-reversing matrix raises; otherwise R = I is substituted there and
    the number of substitutions is returned alongside the rotations.
    """

    J = np.asarray(J, dtype=np.float64)
    if strict:
        check_orientation(J)
    det = np.linalg.det(J)
    bad = (np.abs(det) < SINGULAR_DET) | (det < 0)

    R = J.copy()
    n_bad = int(np.count_nonzero(bad))
    if n_bad:
        R[bad] = np.eye(3)

    for _ in range(POLAR_MAX_ITER):
        R_next = 0.5 * (R + np.swapaxes(np.linalg.inv(R), -1, -2))
        delta = float(np.max(np.abs(R_next - R))) if R.size else 0.0
        R = R_next
        if delta < POLAR_TOL:
            break
    return R, n_bad


def polar_rotation(J: np.ndarray) -> np.ndarray:
    """Rotation R of J = R P for a single 3x3 matrix with det J > 0."""

    J = np.asarray(J, dtype=np.float64)
    if J.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {J.shape}")
    R, _ = polar_rotations(J, strict=True)
    return R


def reorient_tensor(D: TensorLike, R: np.ndarray) -> np.ndarray:
    """R D R^T in packed (..., 6) form."""

    M = to_matrix(D)
    R = np.asarray(R, dtype=np.float64)
    return from_matrix(R @ M @ np.swapaxes(R, -1, -2))


def reorient_field_counted(moved: TensorVolume, phi: VectorField, *, strict: bool = True) -> Tuple[TensorVolume, int]:
    assert_same_grid(moved, phi)
    phi.require(VectorKind.DISPLACEMENT, "reorient_field")
    R, n_bad = polar_rotations(jacobian(phi).data, strict=strict)
    if n_bad:
        logger.warning("[reorient] %d voxel(s) with det J <= 0; identity rotation substituted", n_bad)
    return TensorVolume(moved.grid, reorient_tensor(moved.data, R)), n_bad


def reorient_field(moved: TensorVolume, phi: VectorField, *, strict: bool = True) -> TensorVolume:
    """Apply finite-strain reorientation to tensors already component-warped by ``phi``."""

    return reorient_field_counted(moved, phi, strict=strict)[0]
