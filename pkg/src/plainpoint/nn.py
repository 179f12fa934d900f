"""Parameter storage and small layer building blocks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Tensor


class ParameterStore:
    """Named parameters plus non-trainable buffers (normalization statistics).

    Iteration is in lexicographic name order, which fixes the layout of
    optimizer state and checkpoints.
    """

    def __init__(self, seed: int = 0, dtype=np.float64):
        self.rng_seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.params)

    def __contains__(self, name: str) -> bool:
        return name in self.params or name in self.buffers

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __iter__(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.named_parameters())

    def _check_new(self, name: str) -> None:
        if name in self:
            raise KeyError(f"duplicate parameter name {name!r}")

    def init_rng(self, name: str) -> Rng:
        # keyed by name so initialization does not depend on construction order
        return Rng(self.rng_seed).split("init", name)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        self._check_new(name)
        t = Tensor(np.array(value, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        self._check_new(name)
        self.buffers[name] = np.array(value, dtype=self.dtype)
        return self.buffers[name]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return sorted(self.params.items())

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = np.zeros_like(t.data)

    def clear_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        """Copies of all parameters and buffers, keyed by name."""
        state = {name: t.data.copy() for name, t in self.params.items()}
        state.update({name: b.copy() for name, b in self.buffers.items()})
        return dict(sorted(state.items()))

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = set(self.params) | set(self.buffers)
        missing = expected - set(state)
        unexpected = set(state) - expected
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, value in state.items():
            target = self.params[name].data if name in self.params else self.buffers[name]
            if target.shape != value.shape:
                raise ValueError(f"shape mismatch for {name!r}: {value.shape} vs {target.shape}")
            target[...] = value


@dataclass
class ForwardContext:
    """Training/evaluation switch plus the random stream used by dropout."""

    training: bool = False
    rng: Rng | None = None
    _calls: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.training and self.rng is None:
            raise ValueError("training mode requires an rng")

    def next_rng(self) -> Rng:
        self._calls += 1
        return self.rng.split("dropout", self._calls)

    def dropout(self, x: Tensor, p: float) -> Tensor:
        if not self.training or p == 0.0:
            return x
        return T.dropout(x, p, self.next_rng(), training=True)


def evaluation() -> ForwardContext:
    return ForwardContext(training=False)


class Linear:
    def __init__(self, store: ParameterStore, name: str, in_features: int, out_features: int,
                 bias: bool = True, zero_init: bool = False, init_scale: float = 1.0):
        self.in_features = in_features
        self.out_features = out_features
        if zero_init:
            w = np.zeros((in_features, out_features))
        else:
            bound = init_scale * np.sqrt(6.0 / in_features)
            w = store.init_rng(name + ".weight").uniform(-bound, bound, (in_features, out_features))
        self.weight = store.add(name + ".weight", w)
        self.bias = store.add(name + ".bias", np.zeros(out_features)) if bias else None

    def __call__(self, x) -> Tensor:
        y = T.matmul(x, self.weight)
        return y if self.bias is None else y + self.bias


class LayerNorm:
    def __init__(self, store: ParameterStore, name: str, channels: int, eps: float = 1e-5):
        self.eps = eps
        self.gamma = store.add(name + ".gamma", np.ones(channels))
        self.beta = store.add(name + ".beta", np.zeros(channels))

    def __call__(self, x) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class BatchNorm:
    """Per-feature normalization over all leading axes.

    Training mode normalizes with the statistics of the current input and
    updates running averages; evaluation mode uses the running averages, so a
    row's output depends on that row alone.
    """

    def __init__(self, store: ParameterStore, name: str, channels: int,
                 eps: float = 1e-5, momentum: float = 0.1):
        self.eps = eps
        self.momentum = momentum
        self.gamma = store.add(name + ".gamma", np.ones(channels))
        self.beta = store.add(name + ".beta", np.zeros(channels))
        self.running_mean = store.add_buffer(name + ".running_mean", np.zeros(channels))
        self.running_var = store.add_buffer(name + ".running_var", np.ones(channels))

    def __call__(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        axes = tuple(range(x.ndim - 1))
        if not ctx.training:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            return (x - self.running_mean) * (self.gamma * inv) + self.beta
        mu = T.mean(x, axis=axes, keepdims=True)
        xc = x - mu
        var = T.mean(xc * xc, axis=axes, keepdims=True)
        n = int(np.prod([x.shape[a] for a in axes]))
        m = self.momentum
        self.running_mean *= 1.0 - m
        self.running_mean += m * mu.data.reshape(-1)
        unbiased = var.data.reshape(-1) * (n / max(n - 1, 1))
        self.running_var *= 1.0 - m
        self.running_var += m * unbiased
        return xc * T.power(var + self.eps, -0.5) * self.gamma + self.beta


class MLP:
    """Stack of linear layers, each optionally followed by normalization and ReLU.

    ``final_activation=False`` leaves the last layer purely linear.
    """

    def __init__(self, store: ParameterStore, name: str, in_features: int, widths: Sequence[int],
                 norm: str | None = "batch", final_activation: bool = True):
        if norm not in (None, "batch", "layer"):
            raise ValueError(f"unknown norm {norm!r}")
        self.layers: list[tuple[Linear, object, bool]] = []
        prev = in_features
        for i, width in enumerate(widths):
            last = i == len(widths) - 1
            activate = final_activation or not last
            # batch normalization subtracts the mean, which would cancel a bias
            lin = Linear(store, f"{name}.{i}", prev, width, bias=not (activate and norm == "batch"))
            normalizer = None
            if activate and norm == "batch":
                normalizer = BatchNorm(store, f"{name}.{i}.bn", width)
            elif activate and norm == "layer":
                normalizer = LayerNorm(store, f"{name}.{i}.ln", width)
            self.layers.append((lin, normalizer, activate))
            prev = width
        self.out_features = prev

    @property
    def last(self) -> Linear:
        return self.layers[-1][0]

    def __call__(self, x, ctx: ForwardContext) -> Tensor:
        for lin, normalizer, activate in self.layers:
            x = lin(x)
            if isinstance(normalizer, BatchNorm):
                x = normalizer(x, ctx)
            elif normalizer is not None:
                x = normalizer(x)
            if activate:
                x = T.relu(x)
        return x
