from __future__ import annotations

import numpy as np
import pytest
from scipy.ndimage import binary_erosion

from phantom_generation import (
    GroundTruthError,
    PhantomKind,
    PhantomSpec,
    ground_truth,
    make_ground_truth_svf,
    make_phantom,
    make_registration_pair,
)
from phantom_generation.phantoms import CONTRAST_LABELS, TRACT_LABELS
from registration_loss import ncc
from registration_metrics import deformation_stats, endpoint_error, fa_ssd
from spatial_transform import exp_svf
from tensor_reorientation import fa, principal_direction
from volume_io import GridSpec, VectorField, VectorKind

GRID = GridSpec(32, 32, 32)


@pytest.mark.parametrize("kind", list(PhantomKind))
def test_same_spec_gives_identical_phantom(kind):
    a = make_phantom(PhantomSpec(GRID, kind, noise=0.01, seed=7))
    b = make_phantom(PhantomSpec(GRID, kind, noise=0.01, seed=7))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.data, y.data)
    c = make_phantom(PhantomSpec(GRID, kind, noise=0.01, seed=8))
    assert not np.array_equal(a.t2w.data, c.t2w.data)


def test_kind_accepts_strings_and_rejects_negative_noise():
    assert PhantomSpec(GRID, "tracts").kind is PhantomKind.TRACTS
    with pytest.raises(ValueError):
        PhantomSpec(GRID, noise=-0.1)


def test_blobs_are_isotropic_with_several_labels():
    phantom = make_phantom(PhantomSpec(GRID, PhantomKind.BLOBS))
    assert np.max(fa(phantom.dti.data)) < 1e-12
    assert len(phantom.labels.labels()) >= 3
    assert np.ptp(phantom.t2w.data) > 0.5


def test_tract_fa_inside_and_outside():
    phantom = make_phantom(PhantomSpec(GRID, PhantomKind.TRACTS, seed=3))
    fa_map = fa(phantom.dti.data)
    inside = np.isin(phantom.labels.data, TRACT_LABELS)
    assert inside.sum() > 20
    assert fa_map[inside].min() > 0.5
    assert fa_map[~inside].max() < 0.1


def test_tract_direction_follows_tangent():
    phantom = make_phantom(PhantomSpec(GRID, PhantomKind.TRACTS, seed=3))
    inside = phantom.labels.data == TRACT_LABELS[0]
    directions = principal_direction(phantom.dti.data[inside])
    # first tract lies in the xy-plane
    np.testing.assert_allclose(directions[:, 2], 0.0, atol=1e-9)


def test_orientation_contrast_regions_share_intensity():
    phantom = make_phantom(PhantomSpec(GRID, PhantomKind.ORIENTATION_CONTRAST))
    labels = phantom.labels.data
    slab = np.isin(labels, CONTRAST_LABELS)
    core = binary_erosion(slab, structure=np.ones((3, 3, 3)), iterations=3)
    assert np.any(core & (labels == CONTRAST_LABELS[0])) and np.any(core & (labels == CONTRAST_LABELS[1]))
    values = phantom.t2w.data[core]
    assert np.ptp(values) < 1e-12

    d0 = principal_direction(phantom.dti.data[labels == CONTRAST_LABELS[0]][0])
    d1 = principal_direction(phantom.dti.data[labels == CONTRAST_LABELS[1]][0])
    assert abs(float(d0 @ d1)) < 1e-12


def test_swapping_orientations_leaves_scalar_channel_alone():
    spec = PhantomSpec(GRID, PhantomKind.ORIENTATION_CONTRAST, seed=2)
    plain = make_phantom(spec)
    swapped = make_phantom(PhantomSpec(GRID, PhantomKind.ORIENTATION_CONTRAST, seed=2, swap_orientations=True))
    np.testing.assert_array_equal(plain.t2w.data, swapped.t2w.data)
    assert not np.array_equal(plain.dti.data, swapped.dti.data)

    v_true = make_ground_truth_svf(GRID, 2.0, seed=2)
    a = make_registration_pair(plain, v_true)
    b = make_registration_pair(swapped, v_true)
    assert ncc(a.fixed.t2w, a.moving.t2w) == pytest.approx(ncc(b.fixed.t2w, b.moving.t2w), abs=1e-9)


def test_ground_truth_zero_bound_is_identity():
    v = make_ground_truth_svf(GRID, 0.0, seed=1)
    assert v.kind is VectorKind.VELOCITY
    assert not np.any(v.data)
    with pytest.raises(ValueError):
        make_ground_truth_svf(GRID, -1.0)


def test_ground_truth_hits_requested_bound_without_folds():
    v = make_ground_truth_svf(GRID, 3.0, seed=5)
    stats = deformation_stats(exp_svf(v))
    assert 2.85 <= stats.max_displacement <= 3.15
    assert stats.folds == 0
    np.testing.assert_array_equal(v.data, make_ground_truth_svf(GRID, 3.0, seed=5).data)


def test_ground_truth_gives_up_on_persistent_folds(monkeypatch):
    monkeypatch.setattr(ground_truth, "_rescaled", lambda v, grid, bound, steps: (v, bound, 1))
    with pytest.raises(GroundTruthError, match="fold-free"):
        make_ground_truth_svf(GRID, 3.0, seed=5)


def test_zero_velocity_pair_is_identical():
    phantom = make_phantom(PhantomSpec(GridSpec(16, 16, 16), PhantomKind.TRACTS))
    pair = make_registration_pair(phantom, VectorField.zeros(phantom.t2w.grid, VectorKind.VELOCITY))
    np.testing.assert_array_equal(pair.moving.t2w.data, pair.fixed.t2w.data)
    np.testing.assert_array_equal(pair.moving.labels.data, pair.fixed.labels.data)
    np.testing.assert_allclose(pair.moving.dti.data, pair.fixed.dti.data, atol=1e-12)
    assert pair.substituted == 0
    assert endpoint_error(pair.phi_true, pair.phi_true).max == 0.0


def test_misaligned_pair_has_positive_error():
    phantom = make_phantom(PhantomSpec(GRID, PhantomKind.TRACTS, seed=4))
    pair = make_registration_pair(phantom, make_ground_truth_svf(GRID, 3.0, seed=4))
    assert fa_ssd(pair.fixed.dti, pair.moving.dti) > 0.0
    assert ncc(pair.fixed.t2w, pair.moving.t2w) > -1.0
    assert pair.phi_true.kind is VectorKind.DISPLACEMENT
