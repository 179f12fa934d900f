"""Finite-difference checks for every differentiable operation and model.

Each case builds a fresh parameter store from a seed and returns a scalar
function of it. Primitive cases contract the output with fixed random
weights so that every output element contributes to the gradient.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .geometry import PointCloud
from .gradcheck import GradCheckResult, grad_check_report
from .heads import InterpolationSpec, SegmentationHead, cross_entropy
from .mae import DROP_PATCH_RATIOS, MaskedAutoencoder, ModelConfig, chamfer_l2, mae_loss, partition_patches
from .nn import BatchNorm, ForwardContext, ParameterStore
from .patchify import gather_patches, patchify
from .rng import Rng
from .transformer import DecoderConfig, EncoderConfig, TransformerEncoder

TOLERANCE = 1e-4
EPS = 1e-4
ORDER = 4
PRIMITIVE_SEEDS = 20

Case = Callable[[int], tuple[ParameterStore, Callable[[ParameterStore], T.Tensor]]]


def _away_from_zero(rng: Rng, shape, low: float = 0.5, high: float = 2.0) -> np.ndarray:
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return sign * rng.uniform(low, high, shape)


def _primitive(build: Callable) -> Case:
    """``build(rng, store)`` adds inputs to the store and returns ``store -> output``."""

    def case(seed: int):
        rng = Rng(seed).split("primitive")
        store = ParameterStore(seed)
        out_of = build(rng.split("inputs"), store)
        weights = rng.split("weights").normal(out_of(store).shape)
        return store, lambda s: T.sum_(out_of(s) * weights)

    return case


def _params(store: ParameterStore, **arrays) -> list[T.Tensor]:
    return [store.add(name, value) for name, value in arrays.items()]


def _binary(op):
    def build(rng, store):
        a, b = _params(store, a=rng.normal((3, 4)), b=rng.normal((4,)))
        return lambda s: op(s["a"], s["b"])
    return build


def _div(rng, store):
    _params(store, a=rng.normal((3, 4)), b=_away_from_zero(rng, (3, 1)))
    return lambda s: T.div(s["a"], s["b"])


def _power(rng, store):
    _params(store, a=rng.uniform(0.5, 2.0, (3, 4)))
    exponent = float(rng.uniform(-2.0, 3.0))
    return lambda s: T.power(s["a"], exponent)


def _unary(op, shape=(3, 4)):
    def build(rng, store):
        _params(store, a=_away_from_zero(rng, shape, 0.05, 2.0))
        return lambda s: op(s["a"])
    return build


def _matmul(rng, store):
    _params(store, a=rng.normal((2, 3, 4)), b=rng.normal((4, 5)))
    return lambda s: T.matmul(s["a"], s["b"])


def _concat(rng, store):
    _params(store, a=rng.normal((3, 2)), b=rng.normal((3, 4)))
    return lambda s: T.concat([s["a"], s["b"], s["a"]], axis=1)


def _take(rng, store):
    _params(store, a=rng.normal((5, 3)))
    idx = rng.integers(0, 5, 7)  # repeats exercise gradient accumulation
    return lambda s: T.take(s["a"], idx)


def _distinct(rng, shape):
    # well-separated values keep max/min choices away from ties
    n = int(np.prod(shape))
    return (rng.permutation(n).astype(np.float64) + 0.1 * rng.random(n)).reshape(shape) * 0.3


def _extreme(reduce):
    def build(rng, store):
        _params(store, a=_distinct(rng, (4, 5)))
        return lambda s: reduce(s["a"], axis=1)[0]
    return build


def _layer_norm(rng, store):
    _params(store, x=rng.normal((4, 6)), gamma=rng.uniform(0.5, 1.5, 6), beta=rng.normal(6))
    return lambda s: T.layer_norm(s["x"], s["gamma"], s["beta"])


def _dropout(rng, store):
    _params(store, x=rng.normal((4, 6)))
    mask_seed = rng.integers(0, 2**31)
    return lambda s: T.dropout(s["x"], 0.3, Rng(mask_seed), training=True)


def _pairwise(rng, store):
    _params(store, a=rng.normal((2, 4, 3)), b=rng.normal((2, 5, 3)))
    return lambda s: T.pairwise_sq_dist(s["a"], s["b"])


def _chamfer(rng, store):
    _params(store, p=rng.normal((6, 3)), q=rng.normal((5, 3)))
    return lambda s: chamfer_l2(s["p"], s["q"])


PRIMITIVES: dict[str, Case] = {
    "add": _primitive(_binary(T.add)),
    "sub": _primitive(_binary(T.sub)),
    "mul": _primitive(_binary(T.mul)),
    "div": _primitive(_div),
    "neg": _primitive(_unary(T.neg)),
    "power": _primitive(_power),
    "relu": _primitive(_unary(T.relu)),
    "matmul": _primitive(_matmul),
    "reshape": _primitive(_unary(lambda a: T.reshape(a, (2, 6)))),
    "transpose": _primitive(_unary(lambda a: T.transpose(a, (2, 0, 1)), shape=(2, 3, 4))),
    "concat": _primitive(_concat),
    "take": _primitive(_take),
    "sum": _primitive(_unary(lambda a: T.sum_(a, axis=0))),
    "mean": _primitive(_unary(lambda a: T.mean(a, axis=1, keepdims=True))),
    "max_reduce": _primitive(_extreme(T.max_reduce)),
    "min_reduce": _primitive(_extreme(T.min_reduce)),
    "softmax": _primitive(_unary(T.softmax)),
    "log_softmax": _primitive(_unary(T.log_softmax)),
    "layer_norm": _primitive(_layer_norm),
    "dropout": _primitive(_dropout),
    "pairwise_sq_dist": _primitive(_pairwise),
    "chamfer_l2": _primitive(_chamfer),
}


def jitter_parameters(store: ParameterStore, rng: Rng, scale: float = 0.05) -> None:
    # zero biases put ReLU inputs exactly on the kink; nudge everything off it
    for name, p in store.named_parameters():
        p.data += rng.split(name).normal(p.shape, scale=scale)


def randomize_buffers(store: ParameterStore, rng: Rng) -> None:
    # running statistics away from (0, 1) so evaluation-mode normalization is not the identity
    for name, buf in sorted(store.buffers.items()):
        if name.endswith("running_var"):
            buf[...] = rng.split(name).uniform(0.5, 2.0, buf.shape)
        else:
            buf[...] = rng.split(name).normal(buf.shape, scale=0.1)


def _training_ctx(seed: int) -> Callable[[], ForwardContext]:
    # batch statistics in normalization layers, no dropout noise
    return lambda: ForwardContext(training=True, rng=Rng(seed).split("ctx"))


def batch_norm_case(seed: int):
    """Training-mode normalization with batch statistics, followed by ReLU."""
    rng = Rng(seed).split("batch-norm-case")
    store = ParameterStore(seed)
    bn = BatchNorm(store, "bn", 6)
    store.add("x", rng.normal((2, 8, 6)))
    jitter_parameters(store, rng.split("jitter"), scale=0.3)
    weights = rng.normal((2, 8, 6))
    ctx = _training_ctx(seed)
    return store, lambda s: T.sum_(T.relu(bn(s["x"], ctx())) * weights)


def encoder_case(seed: int):
    rng = Rng(seed).split("encoder-case")
    cfg = EncoderConfig(layers=3, channels=32, heads=4, ffn_channels=64, dropout=0.0)
    store = ParameterStore(seed)
    encoder = TransformerEncoder(store, "encoder", cfg)
    feats = store.add("features", rng.normal((8, 32)))
    pos = rng.normal((8, 32))
    jitter_parameters(store, rng.split("jitter"))
    weights = rng.normal((8, 32))
    ctx = _training_ctx(seed)
    return store, lambda s: T.sum_(encoder(s["features"], pos, ctx()) * weights)


def segmentation_case(seed: int):
    rng = Rng(seed).split("segmentation-case")
    store = ParameterStore(seed)
    head = SegmentationHead(store, "head", 32, 13, InterpolationSpec(neighbors=3), hidden=24, dropout=0.0)
    store.add("encoder_out", rng.normal((8, 32)))
    keys = rng.random((8, 3))
    queries = rng.random((20, 3))
    labels = rng.integers(0, 13, 20)
    jitter_parameters(store, rng.split("jitter"))
    return store, lambda s: cross_entropy(head(queries, keys, s["encoder_out"]), labels)


def toy_mae_case(seed: int):
    """Full masked-autoencoder loss: 8 patches of 16 points, width 32."""
    rng = Rng(seed).split("mae-case")
    pc = PointCloud(rng.random((128, 3)))
    pt = gather_patches(pc, patchify(pc, 8, 16, "fpc"))
    cfg = ModelConfig(
        samples=16,
        encoder=EncoderConfig(layers=3, channels=32, heads=4, ffn_channels=64, dropout=0.0),
        decoder=DecoderConfig(layers=2, channels=32, heads=4, ffn_channels=32, dropout=0.0),
    )
    model = MaskedAutoencoder(cfg, ParameterStore(seed))
    jitter_parameters(model.store, rng.split("jitter"))
    randomize_buffers(model.store, rng.split("buffers"))
    part = partition_patches(8, DROP_PATCH_RATIOS, rng.split("partition"))
    # evaluation mode: with two reserved patches, batch statistics would be degenerate
    return model.store, lambda s: mae_loss(model(pt, part, ForwardContext()))


@dataclass
class SuiteEntry:
    name: str
    seeds: int
    max_rel_error: float
    checked: int
    excluded: int
    seconds: float

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error < TOLERANCE


def run_case(case: Case, seed: int, max_coords: int | None = None, eps: float = EPS,
             order: int = ORDER) -> GradCheckResult:
    store, f = case(seed)
    return grad_check_report(f, store, eps=eps, max_coords_per_param=max_coords, seed=seed, order=order)


def run_gradient_suite(primitive_seeds: int = PRIMITIVE_SEEDS, model_seeds: int = 2,
                       model_coords: int = 8, report: Callable[[str], None] | None = None) -> list[SuiteEntry]:
    """Check all primitives over several seeds, then the encoder, head and toy MAE."""
    plan = [(name, case, primitive_seeds, None) for name, case in PRIMITIVES.items()]
    plan += [
        ("batch norm (training)", batch_norm_case, primitive_seeds, None),
        ("encoder (3 layers)", encoder_case, model_seeds, model_coords),
        ("segmentation head", segmentation_case, model_seeds, model_coords),
        ("masked autoencoder loss", toy_mae_case, model_seeds, model_coords),
    ]
    entries = []
    for name, case, seeds, coords in plan:
        start = time.perf_counter()
        worst, checked, excluded = 0.0, 0, 0
        for seed in range(seeds):
            r = run_case(case, seed, coords)
            worst, checked, excluded = max(worst, r.max_rel_error), checked + r.checked, excluded + len(r.excluded)
        entry = SuiteEntry(name, seeds, worst, checked, excluded, time.perf_counter() - start)
        entries.append(entry)
        if report:
            report(format_entry(entry))
    return entries


def format_entry(e: SuiteEntry) -> str:
    status = "PASS" if e.passed else "FAIL"
    return (f"{status}  {e.name:<24} seeds={e.seeds:<3} checked={e.checked:<5} "
            f"excluded={e.excluded:<4} max_rel_err={e.max_rel_error:.2e}  {e.seconds:.1f}s")
