from __future__ import annotations

import math

import numpy as np
import pytest

from volume_io import GridSpec, ScalarVolume, TensorVolume, VectorField, VectorKind


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def grid8() -> GridSpec:
    return GridSpec(8, 8, 8)


def smooth_image(grid: GridSpec) -> ScalarVolume:
    """Non-constant smooth test image with structure along every axis."""

    x, y, z = np.indices(grid.shape, dtype=np.float64)
    data = np.sin(0.7 * x) + np.cos(0.5 * y) + 0.3 * z + 0.1 * x * y
    return ScalarVolume(grid, data)


def random_tensors(grid: GridSpec, rng: np.random.Generator) -> TensorVolume:
    """Random SPD tensors: A A^T + 0.1 I per voxel, packed."""

    a = rng.normal(size=grid.shape + (3, 3))
    m = a @ np.swapaxes(a, -1, -2) + 0.1 * np.eye(3)
    packed = np.stack(
        [m[..., 0, 0], m[..., 1, 1], m[..., 2, 2], m[..., 0, 1], m[..., 0, 2], m[..., 1, 2]], axis=-1
    )
    return TensorVolume(grid, packed)


def constant_displacement(grid: GridSpec, c) -> VectorField:
    data = np.broadcast_to(np.asarray(c, dtype=np.float64), grid.shape + (3,))
    return VectorField(grid, VectorKind.DISPLACEMENT, data)


def linear_displacement(grid: GridSpec, A, b=(0.0, 0.0, 0.0)) -> VectorField:
    """u(x) = A x + b."""

    x = np.moveaxis(np.indices(grid.shape, dtype=np.float64), 0, -1)
    return VectorField(grid, VectorKind.DISPLACEMENT, x @ np.asarray(A, dtype=np.float64).T + np.asarray(b))


def oracle_sample(data: np.ndarray, p) -> float:
    """Per-voxel trilinear interpolation with clamp-to-edge, written out longhand."""

    n = data.shape
    q = [min(max(float(p[a]), 0.0), n[a] - 1.0) for a in range(3)]
    lo = [min(int(math.floor(q[a])), n[a] - 2) for a in range(3)]
    f = [q[a] - lo[a] for a in range(3)]
    total = 0.0
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                w = (f[0] if di else 1 - f[0]) * (f[1] if dj else 1 - f[1]) * (f[2] if dk else 1 - f[2])
                total += w * data[lo[0] + di, lo[1] + dj, lo[2] + dk]
    return total
