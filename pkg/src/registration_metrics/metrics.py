"""Evaluation metrics: label overlap, FA-map SSD, deformation quality and endpoint error."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from spatial_transform import jacobian, jacobian_determinant
from tensor_reorientation import fa
from volume_io import LabelVolume, TensorVolume, VectorField, VectorKind, assert_same_grid

_INTERIOR = (slice(1, -1), slice(1, -1), slice(1, -1))


@dataclass(frozen=True)
class DiceReport:
    labels: Tuple[int, ...]
    scores: Tuple[float, ...]
    absent: Tuple[bool, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores)) if self.scores else float("nan")

    def score(self, label: int) -> float:
        return self.scores[self.labels.index(label)]

    def as_dict(self) -> Dict[str, float]:
        out = {f"dice.{label}": score for label, score in zip(self.labels, self.scores)}
        out["dice.mean"] = self.mean
        return out


def dice(a: LabelVolume, b: LabelVolume, labels: Optional[Iterable[int]] = None) -> DiceReport:
    """Per-label 2|A&B| / (|A|+|B|). Labels missing from both volumes score 1.0 and are flagged.

    With ``labels`` omitted, every non-background label present in either volume is scored.
    """

    assert_same_grid(a, b)
    if labels is None:
        labels = sorted(set(a.labels()) | set(b.labels()))
    ids, scores, absent = [], [], []
    for label in labels:
        in_a = a.data == label
        in_b = b.data == label
        size = int(np.count_nonzero(in_a)) + int(np.count_nonzero(in_b))
        ids.append(int(label))
        if size == 0:
            scores.append(1.0)
            absent.append(True)
        else:
            scores.append(2.0 * int(np.count_nonzero(in_a & in_b)) / size)
            absent.append(False)
    return DiceReport(tuple(ids), tuple(scores), tuple(absent))


def fa_ssd(F_dti: TensorVolume, Mw_dti: TensorVolume) -> float:
    """Sum over all voxels of squared FA differences."""

    assert_same_grid(F_dti, Mw_dti)
    diff = fa(F_dti.data) - fa(Mw_dti.data)
    return float(np.sum(diff * diff))


@dataclass(frozen=True)
class DeformationStats:
    min_det: float
    mean_det: float
    folds: int
    max_displacement: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def deformation_stats(phi: VectorField) -> DeformationStats:
    """Jacobian-determinant and displacement statistics over interior voxels."""

    phi.require(VectorKind.DISPLACEMENT, "deformation_stats")
    det = jacobian_determinant(jacobian(phi)).data
    magnitude = np.linalg.norm(phi.data, axis=-1)
    if min(phi.grid.shape) > 2:
        det, magnitude = det[_INTERIOR], magnitude[_INTERIOR]
    return DeformationStats(
        min_det=float(det.min()),
        mean_det=float(det.mean()),
        folds=int(np.count_nonzero(det <= 0.0)),
        max_displacement=float(magnitude.max()),
    )


@dataclass(frozen=True)
class EndpointError:
    median: float
    mean: float
    max: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def endpoint_error(phi_a: VectorField, phi_b: VectorField) -> EndpointError:
    """Distance between the mapped positions x + u_a(x) and x + u_b(x) over interior voxels."""

    assert_same_grid(phi_a, phi_b)
    phi_a.require(VectorKind.DISPLACEMENT, "endpoint_error")
    phi_b.require(VectorKind.DISPLACEMENT, "endpoint_error")
    err = np.linalg.norm(phi_a.data - phi_b.data, axis=-1)
    if min(phi_a.grid.shape) > 2:
        err = err[_INTERIOR]
    return EndpointError(median=float(np.median(err)), mean=float(err.mean()), max=float(err.max()))
