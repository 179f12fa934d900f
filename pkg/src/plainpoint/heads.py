"""Per-point semantic segmentation on top of patch features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .geometry import knn_search
from .nn import MLP, ForwardContext, Linear, ParameterStore
from .tensor import Tensor

S3DIS_CLASSES = 13


@dataclass(frozen=True)
class InterpolationSpec:
    neighbors: int = 5
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.neighbors < 1:
            raise ValueError(f"neighbors must be >= 1, got {self.neighbors}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def neighbor_weights(queries: np.ndarray, keys: np.ndarray, spec: InterpolationSpec):
    """Nearest key indices, their distances and normalized inverse-distance weights."""
    queries = np.asarray(queries, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    k = min(spec.neighbors, len(keys))
    idx = knn_search(queries, keys, k)
    dist = np.linalg.norm(queries[:, None, :] - keys[idx], axis=-1)
    inv = 1.0 / np.maximum(dist, spec.epsilon)
    return idx, dist, inv / inv.sum(axis=1, keepdims=True)


class FeatureInterpolator:
    """Carries patch features to arbitrary query points.

    Each of a query's nearest key points contributes its feature with the
    query distance appended, passed through a two-layer MLP; the results are
    blended with inverse-distance weights.
    """

    def __init__(self, store: ParameterStore, name: str, in_channels: int, out_channels: int = 96,
                 spec: InterpolationSpec = InterpolationSpec()):
        self.spec = spec
        self.mlp = MLP(store, name + ".mlp", in_channels + 1, (out_channels, out_channels), norm=None,
                       final_activation=False)

    def __call__(self, queries, keys, feats: Tensor, ctx: ForwardContext) -> Tensor:
        feats = T.as_tensor(feats)
        if feats.shape[0] != len(keys):
            raise T.ShapeError(f"interpolate: {len(keys)} keys but features of shape {feats.shape}")
        idx, dist, w = neighbor_weights(queries, keys, self.spec)
        gathered = T.take(feats, idx)                          # Q x n x C
        with_dist = T.concat([gathered, T.as_tensor(dist[..., None])], axis=-1)
        projected = self.mlp(with_dist, ctx)                   # Q x n x C'
        return T.sum_(projected * w[..., None], axis=1)


class SegmentationHead:
    def __init__(self, store: ParameterStore, name: str, in_channels: int, num_classes: int,
                 spec: InterpolationSpec = InterpolationSpec(), hidden: int = 96, dropout: float = 0.5):
        if num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {num_classes}")
        self.num_classes = num_classes
        self.dropout = dropout
        self.reduce = MLP(store, name + ".reduce", in_channels, (hidden, hidden), norm=None,
                          final_activation=False)
        self.interpolate = FeatureInterpolator(store, name + ".interp", hidden, hidden, spec)
        self.classifier_hidden = Linear(store, name + ".cls.0", hidden, hidden)
        self.classifier_out = Linear(store, name + ".cls.1", hidden, num_classes)

    def __call__(self, queries, keys, encoder_out: Tensor, ctx: ForwardContext | None = None) -> Tensor:
        """``Q x num_classes`` logits for the query points."""
        ctx = ctx or ForwardContext()
        point_feats = self.interpolate(queries, keys, self.reduce(encoder_out, ctx), ctx)
        h = ctx.dropout(T.relu(self.classifier_hidden(point_feats)), self.dropout)
        return self.classifier_out(h)


def segmentation_forward(pc, encoder_out: Tensor, keys, head: SegmentationHead,
                         ctx: ForwardContext | None = None) -> Tensor:
    queries = pc.coords if hasattr(pc, "coords") else np.asarray(pc)
    key_coords = keys.coords if hasattr(keys, "coords") else np.asarray(keys)
    return head(queries, key_coords, encoder_out, ctx)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    return -T.mean(T.sum_(T.log_softmax(logits) * onehot, axis=-1))
