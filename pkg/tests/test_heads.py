import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import assert_bit_identical
from plainpoint import tensor as T
from plainpoint.heads import (
    S3DIS_CLASSES,
    FeatureInterpolator,
    InterpolationSpec,
    SegmentationHead,
    cross_entropy,
    neighbor_weights,
    segmentation_forward,
)
from plainpoint.geometry import PointCloud
from plainpoint.nn import ForwardContext, ParameterStore
from plainpoint.rng import Rng


def test_spec_validation():
    assert InterpolationSpec().neighbors == 5
    with pytest.raises(ValueError):
        InterpolationSpec(neighbors=0)
    with pytest.raises(ValueError):
        InterpolationSpec(epsilon=0.0)
    with pytest.raises(ValueError):
        SegmentationHead(ParameterStore(), "h", 8, 1)


@given(st.integers(0, 10**6), st.integers(1, 12))
def test_weights_are_convex(seed, m):
    r = Rng(seed)
    idx, dist, w = neighbor_weights(r.random((30, 3)), r.random((m, 3)), InterpolationSpec())
    assert idx.shape == w.shape == (30, min(5, m))
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(1), 1.0, rtol=0, atol=1e-12)
    assert np.all(np.diff(dist, axis=1) >= 0)


def test_query_on_a_key_takes_almost_all_weight():
    keys = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 2.0, 0]])
    _, _, w = neighbor_weights(keys[:1], keys, InterpolationSpec(neighbors=3))
    # 1/eps against 1/1 and 1/2
    np.testing.assert_allclose(w[0, 0], 1.0 / (1.0 + 1.5e-8), rtol=1e-12)
    assert w[0, 0] > 1 - 1e-7


def test_equidistant_query_with_equal_features():
    s = ParameterStore(0)
    interp = FeatureInterpolator(s, "i", 4, 6, InterpolationSpec(neighbors=2))
    keys = np.array([[-1.0, 0, 0], [1.0, 0, 0], [5.0, 5, 5]])
    f = np.tile(Rng(0).normal((1, 4)), (3, 1))
    out = interp(np.zeros((1, 3)), keys, f, ForwardContext()).data
    projected = interp.mlp(T.as_tensor(np.concatenate([f[:1], [[1.0]]], axis=1)), ForwardContext()).data
    np.testing.assert_allclose(out, projected, atol=1e-12)


def test_single_key_equidistant_queries_share_logits():
    # the query distance enters the projection, so only equidistant queries agree
    head = SegmentationHead(ParameterStore(1), "h", 16, S3DIS_CLASSES)
    key = np.array([[0.2, 0.3, 0.4]])
    dirs = Rng(1).normal((6, 3))
    queries = key + 0.5 * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    logits = head(queries, key, Rng(2).normal((1, 16))).data
    np.testing.assert_allclose(logits, np.tile(logits[:1], (6, 1)), atol=1e-12)


def test_logit_shape_and_forward_helper():
    head = SegmentationHead(ParameterStore(2), "h", 16, S3DIS_CLASSES)
    pc = PointCloud(Rng(3).random((40, 3)))
    keys = PointCloud(Rng(4).random((8, 3)))
    logits = segmentation_forward(pc, Rng(5).normal((8, 16)), keys, head)
    assert logits.shape == (40, 13)
    with pytest.raises(T.ShapeError):
        head(pc.coords, keys.coords, Rng(5).normal((7, 16)))


@given(st.integers(0, 10**6))
def test_key_row_permutation_invariance(seed):
    r = Rng(seed)
    head = SegmentationHead(ParameterStore(seed), "h", 8, 4)
    queries, keys, feats = r.random((20, 3)), r.random((10, 3)), r.normal((10, 8))
    perm = r.split("perm").permutation(10)
    a = head(queries, keys, feats).data
    b = head(queries, keys[perm], feats[perm]).data
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_dropout_only_in_training():
    head = SegmentationHead(ParameterStore(3), "h", 8, 4)
    r = Rng(6)
    args = (r.random((10, 3)), r.random((6, 3)), r.normal((6, 8)))
    assert_bit_identical(head(*args).data, head(*args, ForwardContext()).data)
    trained = head(*args, ForwardContext(training=True, rng=Rng(0))).data
    assert not np.allclose(trained, head(*args).data)


def test_cross_entropy():
    logits = T.Tensor(np.zeros((3, 4)))
    np.testing.assert_allclose(cross_entropy(logits, [0, 1, 2]).item(), np.log(4), rtol=1e-15)
    sharp = T.Tensor(np.array([[50.0, 0.0], [0.0, 50.0]]))
    assert cross_entropy(sharp, [0, 1]).item() < 1e-20
