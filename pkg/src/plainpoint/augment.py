"""Random flips, rotations about the vertical axis, scaling and translation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud
from .rng import Rng


@dataclass(frozen=True)
class AugmentFlags:
    flip: bool = True
    rotate: bool = True
    scale: bool = True
    translate: bool = True
    scale_range: tuple[float, float] = (0.8, 1.2)
    translate_range: float = 0.5

    @classmethod
    def none(cls) -> AugmentFlags:
        return cls(flip=False, rotate=False, scale=False, translate=False)


@dataclass(frozen=True)
class AugmentParams:
    flip: bool = False
    angle: float = 0.0
    scale: float = 1.0
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)


def sample_augment_params(rng: Rng, flags: AugmentFlags = AugmentFlags()) -> AugmentParams:
    # draw everything unconditionally so toggling one flag leaves the others' values unchanged
    u_flip, u_angle, u_scale = rng.random(3)
    shift = rng.uniform(-flags.translate_range, flags.translate_range, 3)
    lo, hi = flags.scale_range
    return AugmentParams(
        flip=bool(flags.flip and u_flip < 0.5),
        angle=float(2.0 * np.pi * u_angle) if flags.rotate else 0.0,
        scale=float(lo + (hi - lo) * u_scale) if flags.scale else 1.0,
        translation=tuple(float(t) for t in shift) if flags.translate else (0.0, 0.0, 0.0),
    )


def rotate_z(coords: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return coords @ rot.T


def apply_augment(pc: PointCloud, params: AugmentParams) -> PointCloud:
    """Flip x, rotate about z, scale, then translate; extras pass through."""
    x = pc.coords.copy()
    if params.flip:
        x[:, 0] = -x[:, 0]
    if params.angle:
        x = rotate_z(x, params.angle)
    if params.scale != 1.0:
        x = x * params.scale
    if any(params.translation):
        x = x + np.asarray(params.translation)
    return PointCloud(x, pc.extras)


def augment(pc: PointCloud, rng: Rng, flags: AugmentFlags = AugmentFlags()) -> PointCloud:
    return apply_augment(pc, sample_augment_params(rng, flags))
