"""Ground-truth velocity fields and warped phantom pairs with a known answer."""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np
from scipy.ndimage import gaussian_filter

from spatial_transform import (
    DEFAULT_STEPS,
    exp_svf,
    jacobian,
    jacobian_determinant,
    warp_labels_nearest,
    warp_scalar,
    warp_tensor_components,
)
from tensor_reorientation import reorient_field_counted
from volume_io import GridSpec, ScalarVolume, VectorField, VectorKind, assert_same_grid

from .phantoms import Phantom

logger = logging.getLogger(__name__)

SMOOTHING_PASSES = 3
MAX_RESCALES = 20
MAX_EXTRA_PASSES = 6
RESCALE_TOLERANCE = 0.01
_INTERIOR = (slice(1, -1), slice(1, -1), slice(1, -1))


class GroundTruthError(RuntimeError):
    """No fold-free field of the requested size could be built."""


def _interior(a: np.ndarray) -> np.ndarray:
    return a[_INTERIOR] if min(a.shape[:3]) > 2 else a


def _smooth_pass(v: np.ndarray, sigma: float) -> np.ndarray:
    return np.stack([gaussian_filter(v[..., c], sigma, mode="nearest") for c in range(3)], axis=-1)


def _max_displacement(v: np.ndarray, grid: GridSpec, steps: int) -> tuple[float, int]:
    phi = exp_svf(VectorField(grid, VectorKind.VELOCITY, v), steps)
    det = jacobian_determinant(jacobian(phi)).data
    magnitude = np.linalg.norm(phi.data, axis=-1)
    return float(_interior(magnitude).max()), int(np.count_nonzero(_interior(det) <= 0.0))


def _rescaled(v: np.ndarray, grid: GridSpec, bound: float, steps: int) -> tuple[np.ndarray, float, int]:
    peak = float(np.abs(v).max())
    v = v * (bound / peak) if peak > 0 else v
    measured, folds = _max_displacement(v, grid, steps)
    for _ in range(MAX_RESCALES):
        if measured == 0 or abs(measured - bound) <= RESCALE_TOLERANCE * bound:
            break
        v = v * (bound / measured)
        measured, folds = _max_displacement(v, grid, steps)
    return v, measured, folds


def make_ground_truth_svf(
    grid: GridSpec,
    max_displacement_voxels: float,
    seed: int = 0,
    *,
    steps: int = DEFAULT_STEPS,
) -> VectorField:
    """Smooth random velocity whose exponential moves interior voxels by at most ``max_displacement_voxels``.

    Seeded white noise is Gaussian-smoothed several times, then rescaled until
    the measured peak displacement sits within 1% of the bound. If the result
    folds, the field is smoothed further and rescaled again.
    """

    if not np.isfinite(max_displacement_voxels) or max_displacement_voxels < 0:
        raise ValueError(f"max displacement must be >= 0, got {max_displacement_voxels}")
    if max_displacement_voxels == 0:
        return VectorField.zeros(grid, VectorKind.VELOCITY)

    rng = np.random.default_rng(seed)
    sigma = max(grid.shape) / 8.0
    noise = rng.standard_normal(grid.shape + (3,))
    smooth = noise
    for _ in range(SMOOTHING_PASSES):
        smooth = _smooth_pass(smooth, sigma)

    for extra in range(MAX_EXTRA_PASSES + 1):
        v, measured, folds = _rescaled(smooth, grid, max_displacement_voxels, steps)
        if folds == 0:
            break
        logger.debug("[phantom] ground truth folds=%d after %d extra passes; smoothing again", folds, extra)
        smooth = _smooth_pass(smooth, sigma)
    else:
        raise GroundTruthError(
            f"could not build a fold-free field with max displacement {max_displacement_voxels}"
        )

    logger.debug("[phantom] ground truth seed=%d max displacement %.3f voxels", seed, measured)
    return VectorField(grid, VectorKind.VELOCITY, v)


class RegistrationPair(NamedTuple):
    """Fixed phantom, moving = fixed warped by exp(v_true), and the fixed-to-moving answer phi_true = exp(-v_true)."""

    fixed: Phantom
    moving: Phantom
    v_true: VectorField
    phi_true: VectorField
    substituted: int


def make_registration_pair(
    phantom: Phantom,
    v_true: VectorField,
    *,
    noise: float = 0.0,
    seed: int = 0,
    steps: int = DEFAULT_STEPS,
) -> RegistrationPair:
    """Warp ``phantom`` by exp(v_true) with the same warp and reorientation operators the registration uses.

    Tensors are reoriented leniently; the number of identity substitutions is returned.
    """

    assert_same_grid(phantom.t2w, v_true)
    v_true.require(VectorKind.VELOCITY, "make_registration_pair")
    if not np.isfinite(noise) or noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")

    forward = exp_svf(v_true, steps)
    t2w = warp_scalar(phantom.t2w, forward)
    if noise > 0:
        rng = np.random.default_rng(seed)
        t2w = ScalarVolume(t2w.grid, t2w.data + rng.normal(0.0, noise, size=t2w.grid.shape))
    dti, substituted = reorient_field_counted(warp_tensor_components(phantom.dti, forward), forward, strict=False)
    moving = Phantom(t2w, dti, warp_labels_nearest(phantom.labels, forward))

    inverse = VectorField(v_true.grid, VectorKind.VELOCITY, -v_true.data)
    phi_true = exp_svf(inverse, steps)
    return RegistrationPair(phantom, moving, v_true, phi_true, substituted)
