from __future__ import annotations

import numpy as np
import pytest
from conftest import constant_displacement, oracle_sample, random_tensors

from spatial_transform import (
    sample_trilinear,
    warp_labels_nearest,
    warp_scalar,
    warp_tensor_components,
    warp_vector,
)
from volume_io import (
    GridSpec,
    KindMismatchError,
    LabelVolume,
    ScalarVolume,
    TensorVolume,
    VectorField,
    VectorKind,
)


def test_sample_at_integer_voxel(rng):
    vol = ScalarVolume(GridSpec(6, 6, 6), rng.random((6, 6, 6)))
    assert sample_trilinear(vol, (3, 4, 5)) == vol.data[3, 4, 5]


def test_sample_midpoint_is_average():
    g = GridSpec(4, 4, 4)
    data = np.zeros(g.shape)
    data[2:, :, :] = 1.0
    assert sample_trilinear(ScalarVolume(g, data), (1.5, 2.0, 2.0)) == pytest.approx(0.5)


def test_sample_clamps_outside(rng):
    vol = ScalarVolume(GridSpec(5, 5, 5), rng.random((5, 5, 5)))
    assert sample_trilinear(vol, (-2.7, 0, 0)) == sample_trilinear(vol, (0, 0, 0))
    assert sample_trilinear(vol, (9.0, 4.0, 4.0)) == vol.data[4, 4, 4]


def test_zero_displacement_is_identity(rng):
    g = GridSpec(5, 4, 3)
    vol = ScalarVolume(g, rng.random(g.shape))
    out = warp_scalar(vol, VectorField.zeros(g, VectorKind.DISPLACEMENT))
    np.testing.assert_array_equal(out.data, vol.data)


def test_constant_displacement_translates():
    g = GridSpec(8, 5, 5)
    x = np.indices(g.shape)[0].astype(float)
    vol = ScalarVolume(g, x**2)
    out = warp_scalar(vol, constant_displacement(g, (1.0, 0.0, 0.0)))
    np.testing.assert_allclose(out.data[:-1], vol.data[1:])


def test_random_scalar_warp_matches_oracle(rng):
    g = GridSpec(4, 4, 4)
    data = rng.random(g.shape)
    u = rng.uniform(-0.8, 0.8, size=g.shape + (3,))
    out = warp_scalar(ScalarVolume(g, data), VectorField(g, VectorKind.DISPLACEMENT, u))
    for i, j, k in np.ndindex(*g.shape):
        expected = oracle_sample(data, (i + u[i, j, k, 0], j + u[i, j, k, 1], k + u[i, j, k, 2]))
        assert out.data[i, j, k] == pytest.approx(expected, abs=1e-6)


def test_tensor_warp_zero_and_constant(rng):
    g = GridSpec(5, 5, 5)
    tensors = random_tensors(g, rng)
    out = warp_tensor_components(tensors, VectorField.zeros(g, VectorKind.DISPLACEMENT))
    np.testing.assert_array_equal(out.data, tensors.data)

    const = TensorVolume(g, np.broadcast_to([1.0, 2.0, 3.0, 0.1, 0.2, 0.3], g.shape + (6,)))
    u = VectorField(g, VectorKind.DISPLACEMENT, rng.uniform(-1, 1, size=g.shape + (3,)))
    np.testing.assert_allclose(warp_tensor_components(const, u).data, const.data, atol=1e-12)


def test_tensor_warp_matches_channel_oracle(rng):
    g = GridSpec(4, 4, 4)
    tensors = random_tensors(g, rng)
    u = rng.uniform(-0.7, 0.7, size=g.shape + (3,))
    out = warp_tensor_components(tensors, VectorField(g, VectorKind.DISPLACEMENT, u))
    for i, j, k in np.ndindex(*g.shape):
        p = (i + u[i, j, k, 0], j + u[i, j, k, 1], k + u[i, j, k, 2])
        for c in range(6):
            assert out.data[i, j, k, c] == pytest.approx(oracle_sample(tensors.data[..., c], p), abs=1e-6)


def test_vector_warp_keeps_kind(rng):
    g = GridSpec(4, 4, 4)
    field = VectorField(g, VectorKind.VELOCITY, rng.random(g.shape + (3,)))
    out = warp_vector(field, VectorField.zeros(g, VectorKind.DISPLACEMENT))
    assert out.kind is VectorKind.VELOCITY
    np.testing.assert_array_equal(out.data, field.data)


def test_label_warp_rounds_to_nearest():
    g = GridSpec(6, 3, 3)
    labels = LabelVolume(g, np.broadcast_to(np.arange(6)[:, None, None], g.shape))
    zero = warp_labels_nearest(labels, VectorField.zeros(g, VectorKind.DISPLACEMENT))
    np.testing.assert_array_equal(zero.data, labels.data)

    small = warp_labels_nearest(labels, constant_displacement(g, (0.4, 0, 0)))
    np.testing.assert_array_equal(small.data, labels.data)

    shifted = warp_labels_nearest(labels, constant_displacement(g, (0.6, 0, 0)))
    np.testing.assert_array_equal(shifted.data[:-1], labels.data[1:])
    assert set(shifted.labels(include_background=True)) <= set(labels.labels(include_background=True))


def test_warp_requires_displacement(rng):
    g = GridSpec(3, 3, 3)
    with pytest.raises(KindMismatchError):
        warp_scalar(ScalarVolume.zeros(g), VectorField.zeros(g, VectorKind.VELOCITY))
