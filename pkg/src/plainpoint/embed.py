"""Patch embedding (shared PointNet) and key-point position embeddings."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import MLP, ForwardContext, ParameterStore
from .patchify import PatchTensor
from .rng import Rng
from .tensor import Tensor

POS_EMBED_KINDS = ("none", "fourier", "mlp", "global")


def patch_widths(channels: int) -> tuple[int, int, int]:
    """Per-point MLP widths; (64, 128, 256) at the default 256 channels."""
    return (max(1, channels // 4), max(1, channels // 2), channels)


class PatchEmbed:
    """Shared per-point MLP followed by a max-pool over each patch's points."""

    def __init__(self, store: ParameterStore, name: str, in_channels: int, channels: int = 256):
        self.in_channels = in_channels
        self.channels = channels
        self.mlp = MLP(store, name + ".mlp", in_channels, patch_widths(channels), norm="batch")

    def __call__(self, patches: PatchTensor | np.ndarray, ctx: ForwardContext) -> Tensor:
        x = patches.features() if isinstance(patches, PatchTensor) else np.asarray(patches)
        if x.shape[-1] != self.in_channels:
            raise ValueError(f"patch embedding expects {self.in_channels} input channels, got {x.shape[-1]}")
        h = self.mlp(T.as_tensor(x.astype(self.mlp.last.weight.dtype)), ctx)
        pooled, _ = T.max_reduce(h, axis=1)
        return pooled


class NoPosEmbed:
    kind = "none"

    def __init__(self, channels: int):
        self.channels = channels

    def __call__(self, keys: np.ndarray, ctx: ForwardContext) -> Tensor:
        return Tensor(np.zeros((len(keys), self.channels)))


class FourierPosEmbed:
    """Random Fourier features of the key coordinates; no trainable parameters."""

    kind = "fourier"

    def __init__(self, channels: int, sigma: float = 1.0, seed: int = 0):
        if channels % 2:
            raise ValueError(f"Fourier position embedding needs an even channel count, got {channels}")
        self.channels = channels
        self.sigma = sigma
        self.frequencies = Rng(seed).split("fourier").normal((3, channels // 2), scale=sigma)

    def __call__(self, keys: np.ndarray, ctx: ForwardContext) -> Tensor:
        proj = 2.0 * np.pi * np.asarray(keys, dtype=np.float64) @ self.frequencies
        return Tensor(np.concatenate([np.sin(proj), np.cos(proj)], axis=-1))


class MLPPosEmbed:
    """Independent per-key MLP; the last layer is linear."""

    kind = "mlp"

    def __init__(self, store: ParameterStore, name: str, channels: int = 256):
        self.channels = channels
        self.mlp = MLP(store, name + ".mlp", 3, (channels,) * 3, norm="batch", final_activation=False)

    def __call__(self, keys: np.ndarray, ctx: ForwardContext) -> Tensor:
        return self.mlp(T.as_tensor(np.asarray(keys, dtype=self.mlp.last.weight.dtype)), ctx)


class GlobalPosEmbed:
    """Position embedding that also sees every other key point in the set.

    Each key is lifted by a first MLP, the lifted features are max-pooled into
    one global vector, and a second MLP maps ``[global, key]`` to the
    embedding. The pool only covers the keys passed in, so a subset call is
    unaffected by keys outside the subset.
    """

    kind = "global"

    def __init__(self, store: ParameterStore, name: str, channels: int = 256):
        self.channels = channels
        lift = (max(1, channels // 4), max(1, channels // 4), channels)
        self.lift = MLP(store, name + ".lift", 3, lift, norm="batch")
        self.fuse = MLP(store, name + ".fuse", lift[-1] + 3, (channels,) * 3, norm="batch",
                        final_activation=False)

    def global_feature(self, keys: np.ndarray, ctx: ForwardContext) -> Tensor:
        lifted = self.lift(T.as_tensor(np.asarray(keys, dtype=self.fuse.last.weight.dtype)), ctx)
        pooled, _ = T.max_reduce(lifted, axis=0)
        return pooled

    def __call__(self, keys: np.ndarray, ctx: ForwardContext) -> Tensor:
        keys = np.asarray(keys, dtype=self.fuse.last.weight.dtype)
        if len(keys) < 1:
            raise ValueError("global position embedding needs at least one key point")
        g = self.global_feature(keys, ctx)
        tiled = T.take(T.reshape(g, (1, -1)), np.zeros(len(keys), dtype=np.int64))
        return self.fuse(T.concat([tiled, T.as_tensor(keys)], axis=-1), ctx)


def make_pos_embed(kind: str, store: ParameterStore, name: str, channels: int,
                   fourier_sigma: float = 1.0, seed: int = 0):
    if kind == "global":
        return GlobalPosEmbed(store, name, channels)
    if kind == "mlp":
        return MLPPosEmbed(store, name, channels)
    if kind == "fourier":
        return FourierPosEmbed(channels, fourier_sigma, seed)
    if kind == "none":
        return NoPosEmbed(channels)
    raise ValueError(f"unknown position embedding {kind!r}; expected one of {POS_EMBED_KINDS}")
