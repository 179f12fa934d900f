"""Divide a point cloud into M patches of exactly K points.

Four groupings share one output type. Ball query and kNN may place a point
in several patches; k-means and farthest point clustering (FPC) never do,
because every point belongs to exactly one cluster before the rows are cut
or padded to K.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    KeyPoints,
    PointCloud,
    farthest_point_sampling,
    knn_search,
    nearest_key_assignment,
    pairwise_sq_dist,
)
from .rng import Rng

GROUPINGS = ("ball", "knn", "kmeans", "fpc")

# (patches, samples, grouping, radius) for the fine-tuning setups
DETECTION_DEFAULTS = {
    256: (256, "fpc", None),
    512: (128, "fpc", None),
    1024: (64, "ball", 0.2),
    2048: (64, "ball", 0.2),
}
SEGMENTATION_DEFAULTS = {
    256: (128, "fpc", None),
    512: (64, "fpc", None),
    1024: (64, "ball", 0.2),
    2048: (64, "ball", 0.2),
}
PRETRAIN_DEFAULTS = {
    256: (256, 128, "fpc", None),
    512: (256, 128, "fpc", None),
    1024: (512, 64, "ball", 0.2),
    2048: (1024, 64, "ball", 0.2),
}


@dataclass
class PatchSet:
    keys: KeyPoints
    assign: np.ndarray          # M x K point indices
    grouping: str
    pre_dup_counts: np.ndarray  # points per patch before cutting/padding to K
    radius: float | None = None
    centroids: np.ndarray | None = None
    iterations: int | None = None
    labels: np.ndarray | None = None  # cluster of every input point (fpc, kmeans)

    @property
    def num_patches(self) -> int:
        return self.assign.shape[0]

    @property
    def samples(self) -> int:
        return self.assign.shape[1]

    def unique_rows(self) -> list[np.ndarray]:
        return [np.unique(row) for row in self.assign]


@dataclass
class PatchTensor:
    offsets: np.ndarray             # M x K x 3, point minus key point
    key_coords: np.ndarray          # M x 3
    extras: np.ndarray | None = None  # M x K x C_extra

    @property
    def num_patches(self) -> int:
        return self.offsets.shape[0]

    @property
    def samples(self) -> int:
        return self.offsets.shape[1]

    def features(self) -> np.ndarray:
        """Per-point embedding input: offsets followed by any extra channels."""
        if self.extras is None:
            return self.offsets
        return np.concatenate([self.offsets, self.extras], axis=-1)

    def rows(self, index) -> PatchTensor:
        index = np.asarray(index, dtype=np.int64)
        extras = None if self.extras is None else self.extras[index]
        return PatchTensor(self.offsets[index], self.key_coords[index], extras)


def _fill_row(members: np.ndarray, k: int, rng: Rng | None = None) -> np.ndarray:
    """Cut ``members`` to ``k`` entries, or repeat it from the front until it has ``k``."""
    if len(members) >= k:
        if rng is None:
            return members[:k]
        return np.sort(members[rng.choice(len(members), k)])
    return members[np.arange(k) % len(members)]


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"samples per patch must be >= 1, got {k}")


def ball_query_group(pc: PointCloud, keys: KeyPoints, k: int, radius: float) -> PatchSet:
    _check_k(k)
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    d = pairwise_sq_dist(keys.coords, pc.coords)
    inside = d <= radius * radius
    assign = np.empty((len(keys), k), dtype=np.int64)
    counts = np.empty(len(keys), dtype=np.int64)
    for m in range(len(keys)):
        members = np.flatnonzero(inside[m])
        counts[m] = len(members)
        if len(members) == 0:
            members = keys.source_indices[m : m + 1]
        assign[m] = _fill_row(members, k)
    return PatchSet(keys, assign, "ball", counts, radius=radius)


def knn_group(pc: PointCloud, keys: KeyPoints, k: int, method: str = "brute") -> PatchSet:
    _check_k(k)
    assign = knn_search(keys.coords, pc.coords, k, method=method)
    return PatchSet(keys, assign, "knn", np.full(len(keys), k, dtype=np.int64))


def _rows_from_labels(labels: np.ndarray, m: int, k: int, rng: Rng | None):
    order = np.argsort(labels, kind="stable")  # ascending point index within each cluster
    counts = np.bincount(labels, minlength=m)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    assign = np.empty((m, k), dtype=np.int64)
    for j in range(m):
        members = order[starts[j] : starts[j] + counts[j]]
        if len(members) == 0:
            raise ValueError(f"patch {j} received no points")
        assign[j] = _fill_row(members, k, None if rng is None else rng.split(j))
    return assign, counts


def fpc_group(pc: PointCloud, keys: KeyPoints, k: int, rng: Rng | None = None) -> PatchSet:
    """Farthest point clustering: every point joins its nearest key point's patch.

    Rows keep the lowest-indexed members when a cluster has more than ``k``
    points (or a sorted random subset when ``rng`` is given), and repeat their
    members from the front when it has fewer.
    """
    _check_k(k)
    labels = nearest_key_assignment(pc, keys)
    empty = np.setdiff1d(np.arange(len(keys)), labels)
    if len(empty):
        raise ValueError(
            f"key points {empty.tolist()} own no points; key points must be distinct coordinates"
        )
    assign, counts = _rows_from_labels(labels, len(keys), k, rng)
    return PatchSet(keys, assign, "fpc", counts, labels=labels)


def _reseed_empty(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> None:
    m = len(centroids)
    for j in range(m):
        counts = np.bincount(labels, minlength=m)
        if counts[j]:
            continue
        diff = x - centroids[labels]
        dist = np.einsum("ij,ij->i", diff, diff)
        # only take points whose cluster can spare one
        dist[counts[labels] < 2] = -1.0
        far = int(np.argmax(dist))
        labels[far] = j
        centroids[j] = x[far]


def kmeans_group(pc: PointCloud, keys_init: KeyPoints, k: int, max_iters: int = 10,
                 rng: Rng | None = None) -> PatchSet:
    """Lloyd's k-means seeded from ``keys_init`` and cut/padded to ``k`` per patch.

    An empty cluster is reseeded with the point lying farthest from its
    assigned centroid. The reported key of each patch is the member nearest
    to the final centroid.
    """
    _check_k(k)
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    x = pc.coords
    m = len(keys_init)
    if m > len(x):
        raise ValueError(f"cannot form {m} clusters from {len(x)} points")
    centroids = keys_init.coords.astype(np.float64).copy()
    labels = None
    iterations = 0
    for iterations in range(1, max_iters + 1):
        new = nearest_key_assignment(x, centroids)
        _reseed_empty(x, new, centroids)
        converged = labels is not None and np.array_equal(new, labels)
        labels = new
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        centroids = sums / np.bincount(labels, minlength=m)[:, None]
        if converged:
            break
    key_idx = np.empty(m, dtype=np.int64)
    for j in range(m):
        members = np.flatnonzero(labels == j)
        diff = x[members] - centroids[j]
        key_idx[j] = members[int(np.argmin(np.einsum("ij,ij->i", diff, diff)))]
    assign, counts = _rows_from_labels(labels, m, k, rng)
    return PatchSet(KeyPoints.from_indices(pc, key_idx), assign, "kmeans", counts,
                    centroids=centroids, iterations=iterations, labels=labels)


def gather_patches(pc: PointCloud, ps: PatchSet) -> PatchTensor:
    """Patch coordinates relative to their key point, plus uncentered extras."""
    key_coords = ps.keys.coords
    offsets = pc.coords[ps.assign] - key_coords[:, None, :]
    extras = None if pc.extras is None else pc.extras[ps.assign]
    return PatchTensor(offsets, key_coords.copy(), extras)


def patchify(pc: PointCloud, patches: int, samples: int, grouping: str = "fpc",
             radius: float = 0.2, kmeans_iters: int = 10, rng: Rng | None = None,
             random_start: bool = False) -> PatchSet:
    """Sample key points with FPS, then group with the chosen strategy.

    ``rng`` enables the seeded variants: a random FPS start (with
    ``random_start``) and random in-cluster subsampling for FPC and k-means.
    """
    if grouping not in GROUPINGS:
        raise ValueError(f"unknown grouping {grouping!r}; expected one of {GROUPINGS}")
    start_rng = rng.split("fps") if (rng is not None and random_start) else None
    keys = farthest_point_sampling(pc, patches, rng=start_rng)
    sample_rng = None if rng is None else rng.split("sample")
    if grouping == "ball":
        return ball_query_group(pc, keys, samples, radius)
    if grouping == "knn":
        return knn_group(pc, keys, samples)
    if grouping == "kmeans":
        return kmeans_group(pc, keys, samples, kmeans_iters, rng=sample_rng)
    return fpc_group(pc, keys, samples, rng=sample_rng)
