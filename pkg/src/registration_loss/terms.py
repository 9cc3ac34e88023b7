"""Similarity and regularisation terms and their weighted sum.

All sums run over every voxel unless an optional boolean mask is given; the
bending energy always uses the interior voxels where central second
differences are defined.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

from volume_io import (
    DimensionMismatchError,
    ScalarVolume,
    TensorVolume,
    VectorField,
    VectorKind,
    assert_same_grid,
)

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 1.0
DEFAULT_LAMBDA = 0.001


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "lam"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"loss weight {name} must be a finite value >= 0, got {value}")
        if self.alpha + self.beta <= 0:
            raise ValueError("at least one data term (alpha or beta) must have a positive weight")


@dataclass(frozen=True)
class LossReport:
    eds: float
    ncc: float
    be: float
    total: float

    @classmethod
    def combine(cls, eds: float, ncc: float, be: float, weights: LossWeights) -> "LossReport":
        total = weights.alpha * eds + weights.beta * ncc + weights.lam * be
        return cls(eds=float(eds), ncc=float(ncc), be=float(be), total=float(total))

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in (self.eds, self.ncc, self.be, self.total))

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _masked(values: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    if mask is None:
        return values.reshape((-1,) + values.shape[3:])
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != values.shape[:3]:
        raise DimensionMismatchError(f"mask shape {mask.shape} does not match volume {values.shape[:3]}")
    return values[mask]


def ncc(F: ScalarVolume, Mw: ScalarVolume, mask: Optional[np.ndarray] = None) -> float:
    """Negated global normalised cross-correlation; -1 for a perfect match."""

    assert_same_grid(F, Mw)
    f = _masked(F.data, mask)
    m = _masked(Mw.data, mask)
    if f.size == 0 or np.ptp(f) == 0.0 or np.ptp(m) == 0.0:
        raise DegenerateInputError("NCC is undefined for an image with zero variance")
    fc = f - f.mean()
    mc = m - m.mean()
    return float(-np.sum(fc * mc) / np.sqrt(np.sum(fc * fc) * np.sum(mc * mc)))


def eds(F: TensorVolume, Mw: TensorVolume, mask: Optional[np.ndarray] = None) -> float:
    """Sum over voxels of Tr((F - Mw)^2); off-diagonal entries count twice."""

    assert_same_grid(F, Mw)
    diff = _masked(F.data - Mw.data, mask)
    sq = diff * diff
    return float(np.sum(sq[:, :3]) + 2.0 * np.sum(sq[:, 3:]))


def _shift(a: np.ndarray, offsets) -> np.ndarray:
    """Interior view of ``a`` shifted by -1/0/+1 along each axis."""

    index = tuple(slice(1 + o, a.shape[axis] - 1 + o) for axis, o in enumerate(offsets))
    return a[index]


def _offset(**shifts: int) -> tuple:
    axes = {"x": 0, "y": 1, "z": 2}
    o = [0, 0, 0]
    for name, s in shifts.items():
        o[axes[name]] = s
    return tuple(o)


def _second_differences(a: np.ndarray):
    """Yield (weight, stencil) for the xx, yy, zz, xy, xz, yz second differences."""

    centre = _shift(a, (0, 0, 0))
    for axis in ("x", "y", "z"):
        yield 1.0, _shift(a, _offset(**{axis: 1})) - 2.0 * centre + _shift(a, _offset(**{axis: -1}))
    for p, q in (("x", "y"), ("x", "z"), ("y", "z")):
        mixed = (
            _shift(a, _offset(**{p: 1, q: 1}))
            - _shift(a, _offset(**{p: 1, q: -1}))
            - _shift(a, _offset(**{p: -1, q: 1}))
            + _shift(a, _offset(**{p: -1, q: -1}))
        ) / 4.0
        yield 2.0, mixed


def bending_energy(u: VectorField) -> float:
    """Sum of squared second derivatives of each displacement component (interior voxels)."""

    u.require(VectorKind.DISPLACEMENT, "bending_energy")
    if min(u.grid.shape) < 3:
        raise DegenerateInputError(f"bending energy needs >= 3 voxels per axis, got {u.grid.shape}")
    total = 0.0
    for c in range(3):
        for weight, d2 in _second_differences(u.data[..., c]):
            total += weight * float(np.sum(d2 * d2))
    return total


def total_loss(
    F_t2w: ScalarVolume,
    Mw_t2w: ScalarVolume,
    F_dti: Optional[TensorVolume],
    Mw_dti: Optional[TensorVolume],
    u: VectorField,
    w: LossWeights,
    mask: Optional[np.ndarray] = None,
) -> LossReport:
    """alpha * EDS + beta * NCC + lambda * BE; EDS is reported as 0 when tensors are absent."""

    assert_same_grid(F_t2w, Mw_t2w)
    assert_same_grid(F_t2w, u)
    if (F_dti is None) != (Mw_dti is None):
        raise ValueError("fixed and moving tensor volumes must be given together")
    value_eds = 0.0
    if F_dti is not None:
        assert_same_grid(F_t2w, F_dti)
        value_eds = eds(F_dti, Mw_dti, mask)
    return LossReport.combine(value_eds, ncc(F_t2w, Mw_t2w, mask), bending_energy(u), w)
