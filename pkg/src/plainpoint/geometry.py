"""Point clouds and the geometric kernels the patchifiers are built from.

All comparisons use squared Euclidean distance. Whenever two candidates are
equally close the lower index wins, which makes every routine here
deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import Rng

# caps the size of the Q x R x 3 difference array built per chunk
_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class PointCloud:
    coords: np.ndarray
    extras: np.ndarray | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 3 or coords.shape[0] < 1:
            raise ValueError(f"coords must be an N x 3 array with N >= 1, got shape {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coords contain non-finite values")
        object.__setattr__(self, "coords", coords)
        if self.extras is not None:
            extras = np.asarray(self.extras, dtype=np.float64)
            if extras.ndim == 1:
                extras = extras[:, None]
            if extras.shape[0] != coords.shape[0]:
                raise ValueError(f"extras has {extras.shape[0]} rows for {coords.shape[0]} points")
            object.__setattr__(self, "extras", extras)

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def num_extra(self) -> int:
        return 0 if self.extras is None else self.extras.shape[1]

    def subset(self, indices) -> PointCloud:
        indices = np.asarray(indices, dtype=np.int64)
        extras = None if self.extras is None else self.extras[indices]
        return PointCloud(self.coords[indices], extras)


@dataclass(frozen=True)
class KeyPoints:
    coords: np.ndarray
    source_indices: np.ndarray

    def __len__(self) -> int:
        return self.coords.shape[0]

    @classmethod
    def from_indices(cls, pc: PointCloud, indices) -> KeyPoints:
        indices = np.asarray(indices, dtype=np.int64)
        if len(np.unique(indices)) != len(indices):
            raise ValueError("key point source indices must be unique")
        return cls(pc.coords[indices].copy(), indices)


def _coords(x) -> np.ndarray:
    if isinstance(x, PointCloud):
        return x.coords
    if isinstance(x, KeyPoints):
        return x.coords
    return np.asarray(x, dtype=np.float64)


def _row_chunks(q: int, r: int):
    step = max(1, _CHUNK_ELEMENTS // max(3 * r, 1))
    for start in range(0, q, step):
        yield start, min(q, start + step)


def pairwise_sq_dist(a, b) -> np.ndarray:
    """``P x Q`` matrix of squared distances, computed from coordinate differences.

    Differences (rather than the expanded ``|a|^2 + |b|^2 - 2ab`` form) keep
    the result exactly symmetric with an exact zero diagonal when ``a is b``.
    """
    a, b = _coords(a), _coords(b)
    out = np.empty((a.shape[0], b.shape[0]))
    bt = b.T
    for lo, hi in _row_chunks(a.shape[0], b.shape[0]):
        # one axis at a time: a length-3 contraction is slow as a single einsum
        block = out[lo:hi]
        diff = a[lo:hi, 0:1] - bt[0]
        np.multiply(diff, diff, out=block)
        for axis in range(1, a.shape[1]):
            diff = a[lo:hi, axis : axis + 1] - bt[axis]
            block += diff * diff
    return out


def farthest_point_sampling(pc: PointCloud | np.ndarray, m: int, start: int = 0,
                            rng: Rng | None = None) -> KeyPoints:
    """Greedy farthest point sampling.

    Starts from ``start`` (or a random index when ``rng`` is given); each next
    point maximizes its minimum squared distance to the selected set.
    """
    coords = _coords(pc)
    n = coords.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"cannot sample {m} key points from {n} points")
    if rng is not None:
        start = rng.integers(0, n)
    selected = np.empty(m, dtype=np.int64)
    selected[0] = start
    diff = coords - coords[start]
    min_d = np.einsum("ij,ij->i", diff, diff)
    for i in range(1, m):
        nxt = int(np.argmax(min_d))
        selected[i] = nxt
        diff = coords - coords[nxt]
        np.minimum(min_d, np.einsum("ij,ij->i", diff, diff), out=min_d)
    return KeyPoints(coords[selected].copy(), selected)


def _sorted_k(d: np.ndarray, k: int) -> np.ndarray:
    # stable sort puts equal distances in ascending index order
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def knn_search(queries, refs, k: int, method: str = "brute", cell_size: float | None = None) -> np.ndarray:
    """Indices of the ``k`` nearest refs per query, nearest first."""
    q, r = _coords(queries), _coords(refs)
    if k > r.shape[0]:
        raise ValueError(f"k={k} exceeds the number of reference points ({r.shape[0]})")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if method == "grid":
        return UniformGrid(r, cell_size).knn(q, k)
    if method != "brute":
        raise ValueError(f"unknown knn method {method!r}")
    out = np.empty((q.shape[0], k), dtype=np.int64)
    for lo, hi in _row_chunks(q.shape[0], r.shape[0]):
        out[lo:hi] = _sorted_k(pairwise_sq_dist(q[lo:hi], r), k)
    return out


def nearest_key_assignment(pc, keys) -> np.ndarray:
    """Index of the nearest key point for every point (lowest key index on ties)."""
    x, s = _coords(pc), _coords(keys)
    if s.shape[0] < 1:
        raise ValueError("need at least one key point")
    out = np.empty(x.shape[0], dtype=np.int64)
    for lo, hi in _row_chunks(x.shape[0], s.shape[0]):
        out[lo:hi] = np.argmin(pairwise_sq_dist(x[lo:hi], s), axis=1)
    return out


class UniformGrid:
    """Hash grid over reference points for exact k-nearest-neighbor queries.

    Searches cubic shells of cells around the query cell and stops once the
    k-th best candidate is strictly closer than anything outside the searched
    block can be, so results equal the brute-force ordering exactly.
    """

    def __init__(self, refs, cell_size: float | None = None):
        self.refs = _coords(refs)
        lo, hi = self.refs.min(axis=0), self.refs.max(axis=0)
        if cell_size is None:
            extent = float(np.max(hi - lo)) or 1.0
            # about a handful of points per occupied cell for surface-like clouds
            cell_size = extent / max(1.0, np.sqrt(len(self.refs) / 4.0))
        if not cell_size > 0:
            raise ValueError(f"cell_size must be positive, got {cell_size}")
        self.cell_size = float(cell_size)
        self.origin = lo
        cells = self._cell_of(self.refs)
        self.buckets: dict[tuple[int, int, int], np.ndarray] = {}
        order = np.lexsort((np.arange(len(cells)), cells[:, 2], cells[:, 1], cells[:, 0]))
        sorted_cells = cells[order]
        breaks = np.flatnonzero(np.any(np.diff(sorted_cells, axis=0) != 0, axis=1)) + 1
        for group in np.split(order, breaks):
            self.buckets[tuple(int(c) for c in cells[group[0]])] = np.sort(group)
        self.cell_min = cells.min(axis=0)
        self.cell_max = cells.max(axis=0)

    def _cell_of(self, pts: np.ndarray) -> np.ndarray:
        return np.floor((pts - self.origin) / self.cell_size).astype(np.int64)

    def _shell(self, center, ring: int):
        cx, cy, cz = center
        for dx in range(-ring, ring + 1):
            for dy in range(-ring, ring + 1):
                for dz in range(-ring, ring + 1):
                    if max(abs(dx), abs(dy), abs(dz)) != ring:
                        continue
                    bucket = self.buckets.get((cx + dx, cy + dy, cz + dz))
                    if bucket is not None:
                        yield bucket

    def knn(self, queries, k: int) -> np.ndarray:
        q = _coords(queries)
        out = np.empty((q.shape[0], k), dtype=np.int64)
        for i, (point, cell) in enumerate(zip(q, self._cell_of(q))):
            found: list[np.ndarray] = []
            ring = 0
            # beyond this ring every occupied cell has been visited
            last_ring = int(max(np.max(np.abs(cell - self.cell_min)), np.max(np.abs(cell - self.cell_max))))
            while True:
                found.extend(self._shell(cell, ring))
                cand = np.concatenate(found) if found else np.zeros(0, dtype=np.int64)
                if len(cand) >= k:
                    diff = self.refs[cand] - point
                    d = np.einsum("ij,ij->i", diff, diff)
                    order = np.lexsort((cand, d))[:k]
                    # a point outside the searched block is at least ring * cell_size away
                    bound = (ring * self.cell_size * (1.0 - 1e-9)) ** 2
                    if d[order[-1]] < bound or ring >= last_ring:
                        out[i] = cand[order]
                        break
                ring += 1
        return out
