"""Masked-autoencoder pre-training with drop patch.

Each step splits the patches into three disjoint sets. Dropped patches take
no part in the computation at all, reserved patches are encoded, and masked
patches are reconstructed by the decoder from the encoded reserved patches
plus the positions of reserved and masked patches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .embed import POS_EMBED_KINDS, PatchEmbed, make_pos_embed
from .nn import MLP, ForwardContext, LayerNorm, Linear, ParameterStore
from .patchify import PatchTensor
from .rng import Rng
from .tensor import Tensor
from .transformer import DecoderConfig, EncoderConfig, TransformerEncoder

# (drop, mask, reserve)
DROP_PATCH_RATIOS = (0.5, 0.25, 0.25)
STANDARD_MAE_RATIOS = (0.0, 0.75, 0.25)


@dataclass(frozen=True)
class MaskPartition:
    dropped: np.ndarray
    masked: np.ndarray
    reserved: np.ndarray
    ratios: tuple[float, float, float]

    @property
    def num_patches(self) -> int:
        return len(self.dropped) + len(self.masked) + len(self.reserved)

    @property
    def visible_to_decoder(self) -> np.ndarray:
        return np.concatenate([self.reserved, self.masked])


def partition_sizes(m: int, ratios) -> tuple[int, int, int]:
    """(dropped, masked, reserved) counts: floor for the first two, the rest reserved."""
    r_drop, r_mask, r_res = (float(r) for r in ratios)
    if min(r_drop, r_mask, r_res) < 0 or not math.isclose(r_drop + r_mask + r_res, 1.0, abs_tol=1e-9):
        raise ValueError(f"ratios must be non-negative and sum to 1, got {tuple(ratios)}")
    if r_res <= 0:
        raise ValueError("the reserve ratio must be positive")
    # tolerance keeps e.g. 0.29 * 100 from flooring to 28
    n_drop = math.floor(r_drop * m + 1e-9)
    n_mask = math.floor(r_mask * m + 1e-9)
    n_res = m - n_drop - n_mask
    if n_res < 1:
        raise ValueError(f"ratios {tuple(ratios)} leave no reserved patch out of {m}")
    return n_drop, n_mask, n_res


def partition_patches(m: int, ratios=DROP_PATCH_RATIOS, rng: Rng | None = None) -> MaskPartition:
    """Random split into dropped / masked / reserved index sets (each sorted)."""
    n_drop, n_mask, _ = partition_sizes(m, ratios)
    perm = (rng if rng is not None else Rng(0)).permutation(m)
    return MaskPartition(
        dropped=np.sort(perm[:n_drop]),
        masked=np.sort(perm[n_drop : n_drop + n_mask]),
        reserved=np.sort(perm[n_drop + n_mask :]),
        ratios=tuple(float(r) for r in ratios),
    )


def chamfer_l2(p, q) -> Tensor:
    """Mean squared distance from each point of ``p`` to ``q`` plus the reverse.

    Leading axes are treated as a batch; the result then has the batch shape.
    """
    p, q = T.as_tensor(p), T.as_tensor(q)
    if p.shape[-2] < 1 or q.shape[-2] < 1:
        raise ValueError("chamfer_l2 needs non-empty point sets")
    d = T.pairwise_sq_dist(p, q)
    to_q, _ = T.min_reduce(d, axis=-1)
    to_p, _ = T.min_reduce(d, axis=-2)
    return T.mean(to_q, axis=-1) + T.mean(to_p, axis=-1)


@dataclass
class ModelConfig:
    samples: int = 128
    extra_channels: int = 0
    pos_embed: str = "global"
    fourier_sigma: float = 1.0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)

    def __post_init__(self):
        if self.pos_embed not in POS_EMBED_KINDS:
            raise ValueError(f"unknown position embedding {self.pos_embed!r}")
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")


@dataclass
class Reconstruction:
    pred_offsets: Tensor           # |masked| x K x 3
    target_offsets: np.ndarray     # |masked| x K x 3
    masked: np.ndarray
    encoder_out: Tensor | None = None
    decoder_in: Tensor | None = None


class MaskedAutoencoder:
    def __init__(self, cfg: ModelConfig, store: ParameterStore | None = None, seed: int = 0):
        self.cfg = cfg
        self.store = store if store is not None else ParameterStore(seed)
        s = self.store
        enc, dec = cfg.encoder, cfg.decoder
        self.patch_embed = PatchEmbed(s, "encoder.patch_embed", 3 + cfg.extra_channels, enc.channels)
        self.encoder_pos = make_pos_embed(cfg.pos_embed, s, "encoder.pos_embed", enc.channels,
                                          cfg.fourier_sigma, s.rng_seed)
        self.encoder = TransformerEncoder(s, "encoder.blocks", enc)
        self.project = MLP(s, "decoder.project", enc.channels, (dec.channels,) * 3, norm="batch",
                           final_activation=False)
        self.mask_token = s.add("decoder.mask_token", s.init_rng("decoder.mask_token").normal((1, dec.channels), 0.02))
        self.decoder_pos = make_pos_embed(cfg.pos_embed, s, "decoder.pos_embed", dec.channels,
                                          cfg.fourier_sigma, s.rng_seed + 1)
        self.decoder = TransformerEncoder(s, "decoder.blocks", dec)
        self.decoder_norm = LayerNorm(s, "decoder.norm", dec.channels)
        # small initial offsets: patches span centimeters to decimeters
        self.head = Linear(s, "decoder.head", dec.channels, 3 * cfg.samples, init_scale=0.01)

    def encode(self, patches: PatchTensor, ctx: ForwardContext) -> Tensor:
        """Patch features plus position embedding, run through the encoder."""
        feats = self.patch_embed(patches, ctx)
        pos = self.encoder_pos(patches.key_coords, ctx)
        return self.encoder(feats, pos, ctx)

    def forward(self, patches: PatchTensor, part: MaskPartition, ctx: ForwardContext | None = None) -> Reconstruction:
        ctx = ctx or ForwardContext()
        if part.num_patches != patches.num_patches:
            raise ValueError(f"partition covers {part.num_patches} patches, input has {patches.num_patches}")
        if patches.samples != self.cfg.samples:
            raise ValueError(f"model predicts {self.cfg.samples} points per patch, input has {patches.samples}")
        reserved, masked = part.reserved, part.masked
        encoded = self.encode(patches.rows(reserved), ctx)
        tokens = self.project(encoded, ctx)
        if len(masked):
            mask_tokens = T.take(self.mask_token, np.zeros(len(masked), dtype=np.int64))
            tokens = T.concat([tokens, mask_tokens], axis=0)
        # dropped keys never reach the decoder's position embedding
        keys = patches.key_coords[np.concatenate([reserved, masked])]
        pos = self.decoder_pos(keys, ctx)
        decoder_in = tokens + pos
        out = self.decoder_norm(self.decoder(tokens, pos, ctx))
        target = patches.offsets[masked]
        if len(masked):
            rows = T.take(out, np.arange(len(reserved), len(reserved) + len(masked)))
            pred = self.head(rows).reshape(len(masked), self.cfg.samples, 3)
        else:
            pred = Tensor(np.zeros((0, self.cfg.samples, 3)))
        return Reconstruction(pred, target, masked, encoded, decoder_in)

    __call__ = forward


def mae_loss(rec: Reconstruction) -> Tensor:
    """Mean Chamfer-L2 over masked patches; zero when nothing is masked."""
    if rec.pred_offsets.shape != rec.target_offsets.shape:
        raise T.ShapeError(f"mae_loss: prediction {rec.pred_offsets.shape} vs target {rec.target_offsets.shape}")
    if len(rec.masked) == 0:
        return Tensor(np.zeros(()))
    return T.mean(chamfer_l2(rec.pred_offsets, rec.target_offsets))
