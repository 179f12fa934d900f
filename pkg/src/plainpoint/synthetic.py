"""Seeded indoor-like scenes built from primitive surfaces.

A scene is a floor, two walls and a handful of boxes, spheres and upright
cylinders. Each surface gets its own sampling density, so point density
varies across the scene the way it does with distance from a depth camera.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud
from .rng import Rng

ROOM_HALF_SIZE = 2.0
WALL_HEIGHT = 2.0


@dataclass(frozen=True)
class Surface:
    kind: str                 # "quad", "sphere" or "cylinder"
    params: tuple             # geometry, see _sample
    density: float
    color: tuple[float, float, float]

    @property
    def area(self) -> float:
        if self.kind == "quad":
            _, u, v = self.params
            return float(np.linalg.norm(np.cross(u, v)))
        if self.kind == "sphere":
            return 4.0 * np.pi * self.params[1] ** 2
        _, radius, height = self.params
        return 2.0 * np.pi * radius * height


def _sample(surface: Surface, n: int, rng: Rng) -> np.ndarray:
    if surface.kind == "quad":
        origin, u, v = (np.asarray(p) for p in surface.params)
        a, b = rng.random((n, 1)), rng.random((n, 1))
        return origin + a * u + b * v
    if surface.kind == "sphere":
        center, radius = surface.params
        d = rng.normal((n, 3))
        d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-12)
        return np.asarray(center) + radius * d
    base, radius, height = surface.params
    theta = 2.0 * np.pi * rng.random(n)
    z = height * rng.random(n)
    return np.stack([base[0] + radius * np.cos(theta), base[1] + radius * np.sin(theta), base[2] + z], axis=1)


def _box_faces(lo: np.ndarray, hi: np.ndarray) -> list[tuple]:
    dx, dy, dz = hi - lo
    ex, ey, ez = np.array([dx, 0, 0]), np.array([0, dy, 0]), np.array([0, 0, dz])
    return [
        (lo, ex, ey), (lo + ez, ex, ey),
        (lo, ex, ez), (lo + ey, ex, ez),
        (lo, ey, ez), (lo + ex, ey, ez),
    ]


def scene_surfaces(rng: Rng, num_objects: int = 6) -> list[Surface]:
    """Random room layout: floor, two walls, then ``num_objects`` objects."""
    h = ROOM_HALF_SIZE

    def color():
        return tuple(float(c) for c in rng.uniform(0.15, 0.95, 3))

    def density():
        return float(np.exp(rng.uniform(np.log(0.3), np.log(3.0))))

    surfaces = [
        Surface("quad", (np.array([-h, -h, 0.0]), np.array([2 * h, 0, 0]), np.array([0, 2 * h, 0])), density(), color()),
        Surface("quad", (np.array([-h, -h, 0.0]), np.array([2 * h, 0, 0]), np.array([0, 0, WALL_HEIGHT])), density(), color()),
        Surface("quad", (np.array([-h, -h, 0.0]), np.array([0, 2 * h, 0]), np.array([0, 0, WALL_HEIGHT])), density(), color()),
    ]
    for _ in range(num_objects):
        kind = ("box", "sphere", "cylinder")[rng.integers(0, 3)]
        cx, cy = rng.uniform(-0.8 * h, 0.8 * h, 2)
        size = rng.uniform(0.2, 0.8)
        c, d = color(), density()
        if kind == "box":
            half = 0.5 * size * rng.uniform(0.6, 1.4, 2)
            top = rng.uniform(0.3, 1.2)
            lo = np.array([cx - half[0], cy - half[1], 0.0])
            hi = np.array([cx + half[0], cy + half[1], top])
            surfaces += [Surface("quad", face, d, c) for face in _box_faces(lo, hi)]
        elif kind == "sphere":
            r = 0.5 * size
            surfaces.append(Surface("sphere", (np.array([cx, cy, r]), r), d, c))
        else:
            surfaces.append(Surface("cylinder", (np.array([cx, cy, 0.0]), 0.5 * size, rng.uniform(0.4, 1.5)), d, c))
    return surfaces


def _allocate(weights: np.ndarray, total: int) -> np.ndarray:
    # largest-remainder rounding; ties go to the earlier surface
    share = weights / weights.sum() * total
    counts = np.floor(share).astype(np.int64)
    rest = total - counts.sum()
    order = np.lexsort((np.arange(len(share)), -(share - counts)))
    counts[order[:rest]] += 1
    return counts


def synthetic_scene(seed: int, num_points: int = 20000, num_objects: int = 6,
                    color: bool = False, jitter: float = 0.005) -> PointCloud:
    """Point cloud of a random room; identical for identical arguments."""
    if num_points < 1:
        raise ValueError(f"num_points must be >= 1, got {num_points}")
    rng = Rng(seed).split("scene")
    surfaces = scene_surfaces(rng.split("layout"), num_objects)
    counts = _allocate(np.array([s.area * s.density for s in surfaces]), num_points)
    pts, cols = [], []
    for i, (surface, n) in enumerate(zip(surfaces, counts)):
        if n == 0:
            continue
        pts.append(_sample(surface, int(n), rng.split("surface", i)))
        cols.append(np.tile(surface.color, (int(n), 1)))
    coords = np.concatenate(pts)
    coords = coords + rng.split("jitter").normal(coords.shape, scale=jitter)
    order = rng.split("shuffle").permutation(num_points)
    extras = None
    if color:
        shade = np.clip(np.concatenate(cols) + rng.split("shade").normal((num_points, 3), scale=0.03), 0.0, 1.0)
        extras = shade[order]
    return PointCloud(coords[order], extras)
