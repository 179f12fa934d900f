"""Plain transformer encoder over patch tokens (no class token)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import ForwardContext, LayerNorm, Linear, ParameterStore
from .tensor import Tensor


@dataclass
class EncoderConfig:
    layers: int = 3
    channels: int = 256
    heads: int = 4
    ffn_channels: int = 512
    dropout: float = 0.1
    pos_injection: str = "first"
    norm_first: bool = True

    def __post_init__(self):
        if self.layers < 0:
            raise ValueError(f"layers must be >= 0, got {self.layers}")
        if self.channels < 1 or self.heads < 1 or self.ffn_channels < 1:
            raise ValueError("channels, heads and ffn_channels must be positive")
        if self.channels % self.heads:
            raise ValueError(f"channels ({self.channels}) must be divisible by heads ({self.heads})")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.pos_injection not in ("first", "all"):
            raise ValueError(f"pos_injection must be 'first' or 'all', got {self.pos_injection!r}")


@dataclass
class DecoderConfig(EncoderConfig):
    layers: int = 2
    ffn_channels: int = 256


class MultiHeadAttention:
    def __init__(self, store: ParameterStore, name: str, channels: int, heads: int, dropout: float = 0.0):
        if channels % heads:
            raise ValueError(f"channels ({channels}) must be divisible by heads ({heads})")
        self.channels, self.heads, self.dropout = channels, heads, dropout
        self.q = Linear(store, name + ".q", channels, channels)
        # a key bias shifts every score in a row equally, so softmax ignores it
        self.k = Linear(store, name + ".k", channels, channels, bias=False)
        self.v = Linear(store, name + ".v", channels, channels)
        self.out = Linear(store, name + ".out", channels, channels)

    def _split(self, x: Tensor) -> Tensor:
        length = x.shape[0]
        return x.reshape(length, self.heads, self.channels // self.heads).transpose(1, 0, 2)

    def attention_weights(self, x: Tensor) -> Tensor:
        """Per-head ``heads x L x L`` attention matrix; each row sums to one."""
        x = T.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.channels:
            raise T.ShapeError(f"multi_head_attention: expected L x {self.channels} input, got {x.shape}")
        q, k = self._split(self.q(x)), self._split(self.k(x))
        scale = 1.0 / np.sqrt(self.channels // self.heads)
        return T.softmax(T.matmul(q, k.transpose(0, 2, 1)) * scale)

    def __call__(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        x = T.as_tensor(x)
        attn = ctx.dropout(self.attention_weights(x), self.dropout)
        heads = T.matmul(attn, self._split(self.v(x)))
        merged = heads.transpose(1, 0, 2).reshape(x.shape[0], self.channels)
        return self.out(merged)


class TransformerLayer:
    """Residual attention block and residual feed-forward block.

    With ``norm_first`` the layer norm is applied to each block's input
    (pre-norm); otherwise to each residual sum (post-norm).
    """

    def __init__(self, store: ParameterStore, name: str, cfg: EncoderConfig):
        self.cfg = cfg
        self.attn = MultiHeadAttention(store, name + ".attn", cfg.channels, cfg.heads, cfg.dropout)
        self.norm1 = LayerNorm(store, name + ".norm1", cfg.channels)
        self.norm2 = LayerNorm(store, name + ".norm2", cfg.channels)
        self.ffn_in = Linear(store, name + ".ffn_in", cfg.channels, cfg.ffn_channels)
        self.ffn_out = Linear(store, name + ".ffn_out", cfg.ffn_channels, cfg.channels)

    def ffn(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        return self.ffn_out(ctx.dropout(T.relu(self.ffn_in(x)), self.cfg.dropout))

    def __call__(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        if self.cfg.norm_first:
            x = x + self.attn(self.norm1(x), ctx)
            return x + self.ffn(self.norm2(x), ctx)
        x = self.norm1(x + self.attn(x, ctx))
        return self.norm2(x + self.ffn(x, ctx))


class TransformerEncoder:
    def __init__(self, store: ParameterStore, name: str, cfg: EncoderConfig):
        self.cfg = cfg
        self.layers = [TransformerLayer(store, f"{name}.layer{i}", cfg) for i in range(cfg.layers)]

    def __call__(self, features: Tensor, pos: Tensor, ctx: ForwardContext) -> Tensor:
        features, pos = T.as_tensor(features), T.as_tensor(pos)
        if features.shape != pos.shape:
            raise T.ShapeError(f"encoder: features {features.shape} and position embedding {pos.shape} differ")
        x = features + pos
        for i, layer in enumerate(self.layers):
            if i > 0 and self.cfg.pos_injection == "all":
                x = x + pos
            x = layer(x, ctx)
        return x
