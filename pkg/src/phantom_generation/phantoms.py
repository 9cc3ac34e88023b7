"""Seeded synthetic T2w / tensor / label phantoms.

Tensors are expressed in units of 1e-3 mm^2/s, so a typical white-matter
tract tensor has eigenvalues (1.8, 0.3, 0.3).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.ndimage import gaussian_filter

from volume_io import GridSpec, LabelVolume, ScalarVolume, TensorVolume

logger = logging.getLogger(__name__)

DEFAULT_GRID = GridSpec(32, 32, 32, 1.5)

TRACT_EIGENVALUES = (1.8, 0.3, 0.3)
SCALAR_SMOOTHING_VOX = 0.8
N_BLOBS = 4

# label -> (T2w intensity, mean diffusivity); 0 is background
BACKGROUND, BRAIN = 0, 1
BLOB_LABELS = (2, 3, 4, 5)
TRACT_LABELS = (6, 7)
CONTRAST_LABELS = (6, 7)
REGION_INTENSITY = {0: 0.0, 1: 0.45, 2: 0.8, 3: 0.25, 4: 0.95, 5: 0.65, 6: 0.3, 7: 0.3}
REGION_DIFFUSIVITY = {0: 0.0, 1: 0.8, 2: 1.0, 3: 1.2, 4: 0.9, 5: 1.1}
CONTRAST_INTENSITY = 0.7


class PhantomKind(str, enum.Enum):
    BLOBS = "blobs"
    TRACTS = "tracts"
    ORIENTATION_CONTRAST = "orientation-contrast"


@dataclass(frozen=True)
class PhantomSpec:
    grid: GridSpec = DEFAULT_GRID
    kind: PhantomKind = PhantomKind.BLOBS
    noise: float = 0.0
    seed: int = 0
    swap_orientations: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PhantomKind(self.kind))
        if not np.isfinite(self.noise) or self.noise < 0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")


class Phantom(NamedTuple):
    t2w: ScalarVolume
    dti: TensorVolume
    labels: LabelVolume


@dataclass
class _Canvas:
    """Mutable working arrays while a phantom is painted."""

    grid: GridSpec
    labels: np.ndarray = field(init=False)
    tensors: np.ndarray = field(init=False)
    coords: tuple = field(init=False)

    def __post_init__(self) -> None:
        self.labels = np.zeros(self.grid.shape, dtype=np.int64)
        self.tensors = np.zeros(self.grid.shape + (6,))
        # normalised coordinates in [-1, 1] along each axis
        axes = [np.linspace(-1.0, 1.0, n) for n in self.grid.shape]
        self.coords = tuple(np.meshgrid(*axes, indexing="ij"))

    def paint_isotropic(self, mask: np.ndarray, label: int) -> None:
        self.labels[mask] = label
        self.tensors[mask] = 0.0
        self.tensors[mask, :3] = REGION_DIFFUSIVITY[label]

    def paint_oriented(self, mask: np.ndarray, label: int, direction: np.ndarray) -> None:
        """Cylindrically symmetric tensors whose principal axis follows ``direction`` (..., 3)."""

        l_par, l_perp = TRACT_EIGENVALUES[0], TRACT_EIGENVALUES[1]
        t = direction[mask]
        t = t / np.linalg.norm(t, axis=-1, keepdims=True)
        outer = np.stack(
            [t[:, 0] ** 2, t[:, 1] ** 2, t[:, 2] ** 2, t[:, 0] * t[:, 1], t[:, 0] * t[:, 2], t[:, 1] * t[:, 2]],
            axis=-1,
        )
        iso = np.array([l_perp, l_perp, l_perp, 0.0, 0.0, 0.0])
        self.labels[mask] = label
        self.tensors[mask] = iso + (l_par - l_perp) * outer


def _paint_blobs(canvas: _Canvas, rng: np.random.Generator) -> None:
    x, y, z = canvas.coords
    brain = (x / 0.85) ** 2 + (y / 0.85) ** 2 + (z / 0.8) ** 2 <= 1.0
    canvas.paint_isotropic(brain, BRAIN)
    for label in BLOB_LABELS[:N_BLOBS]:
        centre = rng.uniform(-0.45, 0.45, size=3)
        radius = rng.uniform(0.15, 0.25)
        blob = (x - centre[0]) ** 2 + (y - centre[1]) ** 2 + (z - centre[2]) ** 2 <= radius**2
        canvas.paint_isotropic(blob & brain, label)


def _paint_tracts(canvas: _Canvas, rng: np.random.Generator) -> None:
    x, y, z = canvas.coords
    width = 0.09
    # arc in the xy-plane
    cx, cy = rng.uniform(-0.15, 0.15, size=2)
    radius = rng.uniform(0.4, 0.5)
    r_xy = np.hypot(x - cx, y - cy)
    arc_xy = (np.abs(r_xy - radius) <= width) & (np.abs(z - 0.15) <= width) & (y - cy >= -0.2)
    tangent_xy = np.stack([-(y - cy), x - cx, np.zeros_like(x)], axis=-1)
    canvas.paint_oriented(arc_xy, TRACT_LABELS[0], tangent_xy)
    # arc in the xz-plane
    cx, cz = rng.uniform(-0.15, 0.15, size=2)
    radius = rng.uniform(0.35, 0.45)
    r_xz = np.hypot(x - cx, z - cz)
    arc_xz = (np.abs(r_xz - radius) <= width) & (np.abs(y + 0.35) <= width) & (z - cz >= -0.2)
    tangent_xz = np.stack([-(z - cz), np.zeros_like(x), x - cx], axis=-1)
    canvas.paint_oriented(arc_xz & ~arc_xy, TRACT_LABELS[1], tangent_xz)


def _paint_orientation_contrast(canvas: _Canvas, rng: np.random.Generator, swap: bool) -> None:
    x, y, z = canvas.coords
    slab = (np.abs(x) <= 0.55) & (np.abs(y + 0.05) <= 0.3) & (np.abs(z) <= 0.3)
    split = rng.uniform(-0.1, 0.1)
    along_x = np.zeros(canvas.grid.shape + (3,))
    along_x[..., 0] = 1.0
    along_y = np.zeros(canvas.grid.shape + (3,))
    along_y[..., 1] = 1.0
    first, second = (along_y, along_x) if swap else (along_x, along_y)
    canvas.paint_oriented(slab & (x < split), CONTRAST_LABELS[0], first)
    canvas.paint_oriented(slab & (x >= split), CONTRAST_LABELS[1], second)


def make_phantom(spec: PhantomSpec) -> Phantom:
    """Build the (T2w, tensor, label) phantom described by ``spec``; identical specs give identical arrays."""

    rng = np.random.default_rng(spec.seed)
    canvas = _Canvas(spec.grid)
    _paint_blobs(canvas, rng)
    if spec.kind is PhantomKind.TRACTS:
        _paint_tracts(canvas, rng)
    elif spec.kind is PhantomKind.ORIENTATION_CONTRAST:
        _paint_orientation_contrast(canvas, rng, spec.swap_orientations)

    intensity = np.vectorize(REGION_INTENSITY.get, otypes=[np.float64])(canvas.labels)
    if spec.kind is PhantomKind.ORIENTATION_CONTRAST:
        intensity[np.isin(canvas.labels, CONTRAST_LABELS)] = CONTRAST_INTENSITY
    t2w = gaussian_filter(intensity, SCALAR_SMOOTHING_VOX, mode="nearest")
    if spec.noise > 0:
        t2w = t2w + rng.normal(0.0, spec.noise, size=t2w.shape)

    logger.debug(
        "[phantom] %s %s seed=%d labels=%s", spec.kind.value, spec.grid.describe(), spec.seed, np.unique(canvas.labels)
    )
    return Phantom(
        ScalarVolume(spec.grid, t2w),
        TensorVolume(spec.grid, canvas.tensors),
        LabelVolume(spec.grid, canvas.labels),
    )
