"""Symmetric 3x3 tensor helpers: packing, eigenvalues, fractional anisotropy."""

from __future__ import annotations

from typing import NamedTuple, Union

import numpy as np

from volume_io import ScalarVolume, TensorVolume

# |r| above this means two eigenvalues (nearly) coincide and acos loses precision
_DEGENERATE_R = 1.0 - 1e-6


class SymTensor(NamedTuple):
    dxx: float
    dyy: float
    dzz: float
    dxy: float
    dxz: float
    dyz: float

    def as_matrix(self) -> np.ndarray:
        return to_matrix(np.asarray(self, dtype=np.float64))


TensorLike = Union[SymTensor, np.ndarray]


def to_matrix(d: TensorLike) -> np.ndarray:
    """(..., 6) packed tensors -> (..., 3, 3) symmetric matrices."""

    d = np.asarray(d, dtype=np.float64)
    dxx, dyy, dzz, dxy, dxz, dyz = np.moveaxis(d, -1, 0)
    return np.stack(
        [
            np.stack([dxx, dxy, dxz], axis=-1),
            np.stack([dxy, dyy, dyz], axis=-1),
            np.stack([dxz, dyz, dzz], axis=-1),
        ],
        axis=-2,
    )


def from_matrix(m: np.ndarray) -> np.ndarray:
    """(..., 3, 3) -> (..., 6); off-diagonals are averaged with their transpose."""

    m = np.asarray(m, dtype=np.float64)
    return np.stack(
        [
            m[..., 0, 0],
            m[..., 1, 1],
            m[..., 2, 2],
            0.5 * (m[..., 0, 1] + m[..., 1, 0]),
            0.5 * (m[..., 0, 2] + m[..., 2, 0]),
            0.5 * (m[..., 1, 2] + m[..., 2, 1]),
        ],
        axis=-1,
    )


def eigenvalues_sym3(D: TensorLike) -> np.ndarray:
    """Eigenvalues in descending order, shape (..., 3).

    Closed-form trigonometric solution; diagonal inputs are sorted directly and
    near-degenerate spectra go through ``numpy.linalg.eigvalsh``.
    """

    d = np.asarray(D, dtype=np.float64)
    single = d.ndim == 1
    d = d.reshape(-1, 6)
    dxx, dyy, dzz, dxy, dxz, dyz = d.T

    out = np.empty((d.shape[0], 3), dtype=np.float64)
    off = dxy**2 + dxz**2 + dyz**2
    diagonal = off == 0.0
    out[diagonal] = -np.sort(-d[diagonal, :3], axis=1)

    rest = ~diagonal
    if np.any(rest):
        q = (dxx[rest] + dyy[rest] + dzz[rest]) / 3.0
        p2 = (dxx[rest] - q) ** 2 + (dyy[rest] - q) ** 2 + (dzz[rest] - q) ** 2 + 2.0 * off[rest]
        p = np.sqrt(p2 / 6.0)
        b = (to_matrix(d[rest]) - q[:, None, None] * np.eye(3)) / p[:, None, None]
        r = np.clip(np.linalg.det(b) / 2.0, -1.0, 1.0)
        phi = np.arccos(r) / 3.0
        e1 = q + 2.0 * p * np.cos(phi)
        e3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
        e2 = 3.0 * q - e1 - e3
        block = np.stack([e1, e2, e3], axis=1)

        degenerate = np.abs(r) > _DEGENERATE_R
        if np.any(degenerate):
            exact = np.linalg.eigvalsh(to_matrix(d[rest][degenerate]))
            block[degenerate] = exact[:, ::-1]
        out[rest] = block

    return out[0] if single else out.reshape(np.asarray(D).shape[:-1] + (3,))


def fa(D: TensorLike):
    """Fractional anisotropy sqrt(3/2) * |D - tr(D)/3 I|_F / |D|_F, 0 for the zero tensor."""

    d = np.asarray(D, dtype=np.float64)
    dxx, dyy, dzz, dxy, dxz, dyz = np.moveaxis(d, -1, 0)
    mean = (dxx + dyy + dzz) / 3.0
    offdiag = 2.0 * (dxy**2 + dxz**2 + dyz**2)
    dev2 = (dxx - mean) ** 2 + (dyy - mean) ** 2 + (dzz - mean) ** 2 + offdiag
    norm2 = dxx**2 + dyy**2 + dzz**2 + offdiag
    with np.errstate(invalid="ignore", divide="ignore"):
        value = np.where(norm2 > 0.0, np.sqrt(1.5 * dev2 / np.where(norm2 > 0.0, norm2, 1.0)), 0.0)
    value = np.clip(value, 0.0, 1.0)
    return float(value) if value.ndim == 0 else value


def fa_map(vol: TensorVolume) -> ScalarVolume:
    return ScalarVolume(vol.grid, fa(vol.data))


def principal_direction(D: TensorLike) -> np.ndarray:
    """Unit eigenvector of the largest eigenvalue, sign fixed so the largest |entry| is positive."""

    vals, vecs = np.linalg.eigh(to_matrix(D))
    v = vecs[..., :, -1]
    pivot = np.take_along_axis(v, np.argmax(np.abs(v), axis=-1)[..., None], axis=-1)
    return v * np.where(pivot < 0, -1.0, 1.0)
