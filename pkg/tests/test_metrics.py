from __future__ import annotations

import numpy as np
import pytest
from conftest import constant_displacement, random_tensors

from registration_metrics import deformation_stats, dice, endpoint_error, fa_ssd
from tensor_reorientation import fa
from volume_io import GridSpec, LabelVolume, TensorVolume, VectorField, VectorKind


def _labels(g, *boxes):
    data = np.zeros(g.shape, dtype=int)
    for label, box in boxes:
        data[box] = label
    return LabelVolume(g, data)


def test_dice_identical_is_one():
    g = GridSpec(6, 6, 6)
    a = _labels(g, (1, np.s_[:3]), (2, np.s_[3:, :2]))
    report = dice(a, a)
    assert report.labels == (1, 2)
    assert report.scores == (1.0, 1.0)
    assert report.mean == 1.0


def test_dice_disjoint_and_half_overlap():
    g = GridSpec(8, 4, 4)
    a = _labels(g, (1, np.s_[0:4]))
    assert dice(a, _labels(g, (1, np.s_[4:8]))).score(1) == 0.0
    assert dice(a, _labels(g, (1, np.s_[2:6]))).score(1) == pytest.approx(0.5)


def test_dice_absent_label_is_flagged():
    g = GridSpec(4, 4, 4)
    a = _labels(g, (1, np.s_[:2]))
    report = dice(a, a, labels=[1, 9])
    assert report.score(9) == 1.0
    assert report.absent == (False, True)
    assert report.as_dict()["dice.9"] == 1.0
    assert "dice.mean" in report.as_dict()


def test_fa_ssd_examples(rng):
    n = 4
    g = GridSpec(n, n, n)
    F = random_tensors(g, rng)
    assert fa_ssd(F, F) == 0.0
    iso = TensorVolume(g, np.broadcast_to([1.0, 1.0, 1.0, 0, 0, 0], g.shape + (6,)))
    stick = TensorVolume(g, np.broadcast_to([1.0, 0, 0, 0, 0, 0], g.shape + (6,)))
    assert fa_ssd(iso, stick) == pytest.approx(n**3)


def test_fa_ssd_matches_loop_oracle(rng):
    g = GridSpec(3, 3, 3)
    A, B = random_tensors(g, rng), random_tensors(g, rng)
    oracle = sum((fa(A.data[i]) - fa(B.data[i])) ** 2 for i in np.ndindex(*g.shape))
    assert fa_ssd(A, B) == pytest.approx(oracle, abs=1e-9)


def test_deformation_stats_identity_and_translation():
    g = GridSpec(6, 6, 6)
    stats = deformation_stats(VectorField.zeros(g, VectorKind.DISPLACEMENT))
    assert (stats.min_det, stats.folds, stats.max_displacement) == (1.0, 0, 0.0)

    shifted = deformation_stats(constant_displacement(g, (3.0, 4.0, 0.0)))
    assert shifted.min_det == pytest.approx(1.0)
    assert shifted.max_displacement == pytest.approx(5.0)


def test_endpoint_error_of_translations():
    g = GridSpec(5, 5, 5)
    phi = constant_displacement(g, (1.0, 0.0, 0.0))
    assert endpoint_error(phi, phi).max == 0.0
    err = endpoint_error(phi, constant_displacement(g, (1.0, 0.0, 0.5)))
    assert (err.median, err.mean, err.max) == pytest.approx((0.5, 0.5, 0.5))
