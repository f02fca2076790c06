import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from petparc.core import (
    NormalizationParams,
    Tractogram,
    apply_normalization,
    compute_normalization,
    normalize_points,
    resample,
    resample_batch,
    reverse,
)
from petparc.errors import DegenerateStreamline, EmptyTractogram

coords = st.floats(-100, 100, allow_nan=False, width=32)
streamline = arrays(np.float64, (15, 3), elements=coords)


def test_resample_straight_segment():
    out = resample([[0, 0, 0], [14, 0, 0]])
    expected = np.stack([np.arange(15.0), np.zeros(15), np.zeros(15)], axis=1)
    np.testing.assert_array_equal(out, expected)


def test_resample_uniform_input_is_identity(rng):
    # equal-length steps along random directions
    steps = rng.normal(size=(14, 3))
    steps /= np.linalg.norm(steps, axis=1, keepdims=True)
    p = np.concatenate([np.zeros((1, 3)), np.cumsum(steps, axis=0)])
    np.testing.assert_allclose(resample(p), p, atol=1e-9)


def test_resample_semicircle_against_arc_parametrization():
    theta = np.linspace(0, math.pi, 100)
    arc = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=1)
    out = resample(arc)
    radius = np.linalg.norm(out[:, :2], axis=1)
    assert np.all(np.abs(radius - 1) < 1e-3)
    angles = np.arctan2(out[:, 1], out[:, 0])
    np.testing.assert_allclose(angles, np.linspace(0, math.pi, 15), atol=1e-2)


def test_resample_endpoints_bitwise(rng):
    p = rng.normal(size=(37, 3))
    out = resample(p)
    assert np.array_equal(out[0], p[0]) and np.array_equal(out[-1], p[-1])


def test_resample_skips_repeated_points():
    p = [[0, 0, 0], [0, 0, 0], [7, 0, 0], [7, 0, 0], [14, 0, 0]]
    np.testing.assert_allclose(resample(p)[:, 0], np.arange(15.0), atol=1e-12)


@pytest.mark.parametrize(
    "bad",
    [
        [[1, 2, 3], [1, 2, 3]],
        [[0, 0, 0]],
        [[0, 0, 0], [np.nan, 0, 0]],
        [[0, 0, 0], [np.inf, 1, 1]],
    ],
)
def test_resample_degenerate(bad):
    with pytest.raises(DegenerateStreamline):
        resample(bad)


def test_resample_batch_matches_single(rng):
    p = np.cumsum(rng.normal(size=(20, 9, 3)), axis=1)
    batch = resample_batch(p)
    single = np.stack([resample(x) for x in p])
    np.testing.assert_allclose(batch, single, atol=1e-12)


def test_compute_normalization_extrema():
    t = Tractogram(np.linspace([0, 0, 0], [10, 10, 10], 15)[None])
    p = compute_normalization(t)
    np.testing.assert_array_equal(p.lo, [0, 0, 0])
    np.testing.assert_array_equal(p.hi, [10, 10, 10])


def test_compute_normalization_unit_cube():
    a = np.linspace([-1, -1, -1], [1, 1, 1], 15)
    p = compute_normalization(Tractogram(a[None]))
    np.testing.assert_array_equal(p.lo, -1)
    np.testing.assert_array_equal(p.hi, 1)


def test_compute_normalization_disjoint_boxes():
    a = np.linspace([0, 5, 0], [1, 6, 1], 15)
    b = np.linspace([3, -2, 7], [4, -1, 9], 15)
    p = compute_normalization(Tractogram(np.stack([a, b])))
    np.testing.assert_array_equal(p.lo, [0, -2, 0])
    np.testing.assert_array_equal(p.hi, [4, 6, 9])


def test_compute_normalization_empty():
    with pytest.raises(EmptyTractogram):
        compute_normalization(Tractogram(np.zeros((0, 15, 3))))


def test_apply_normalization_fixed_points():
    p = NormalizationParams([0, 0, 0], [10, 4, 2])
    out = normalize_points(np.array([[5, 2, 1], [0, 0, 0], [10, 4, 2]]), p)
    np.testing.assert_array_equal(out, [[0, 0, 0], [-1, -1, -1], [1, 1, 1]])


def test_apply_normalization_degenerate_axis():
    pts = np.linspace([0, 0, 3], [1, 2, 3], 15)[None]
    t = apply_normalization(Tractogram(pts), compute_normalization(Tractogram(pts)))
    np.testing.assert_array_equal(t.streamlines[..., 2], 0)


def test_params_reject_inverted_box():
    with pytest.raises(ValueError):
        NormalizationParams([1, 0, 0], [0, 1, 1])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 15, 3), elements=coords))
def test_normalization_hits_unit_box_and_is_idempotent(pts):
    t = Tractogram(pts)
    once = apply_normalization(t, compute_normalization(t))
    p = compute_normalization(once)
    live = (compute_normalization(t).hi - compute_normalization(t).lo) > 0
    np.testing.assert_allclose(p.lo[live], -1, atol=1e-9)
    np.testing.assert_allclose(p.hi[live], 1, atol=1e-9)
    twice = apply_normalization(once, p)
    np.testing.assert_allclose(twice.streamlines, once.streamlines, atol=1e-9)


def test_reverse_examples():
    p = np.arange(45.0).reshape(15, 3)
    np.testing.assert_array_equal(reverse(p), p[::-1])
    pal = np.concatenate([p[:8], p[:7][::-1]])
    np.testing.assert_array_equal(reverse(pal), pal)


@given(streamline)
def test_reverse_involution_bitwise(v):
    assert reverse(reverse(v)).tobytes() == v.tobytes()


def test_tractogram_stores_float32():
    t = Tractogram(np.zeros((2, 15, 3)), [0, 1])
    assert t.streamlines.dtype == np.float32
    assert t.labels.dtype == np.int64
