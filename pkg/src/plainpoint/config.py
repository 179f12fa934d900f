"""Run configuration: ``key = value`` files with four sections.

::

    [encoder]   layers, channels, heads, ffn_channels, dropout,
                pos_injection, norm_first, pos_embed, fourier_sigma
    [decoder]   layers, channels, heads, ffn_channels, dropout
    [patchify]  patches, samples, group, radius, kmeans_iters,
                random_sample, random_start
    [train]     epochs, batch_size, base_lr, warmup_epochs, ...

Unknown sections or keys are rejected; omitted keys take their defaults.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .mae import ModelConfig, partition_sizes
from .patchify import GROUPINGS
from .transformer import DecoderConfig, EncoderConfig

_MODEL_KEYS = ("pos_embed", "fourier_sigma")


class ConfigError(ValueError):
    pass


@dataclass
class PatchifyConfig:
    patches: int = 256
    samples: int = 128
    group: str = "fpc"
    radius: float = 0.2
    kmeans_iters: int = 10
    random_sample: bool = False
    random_start: bool = False

    def __post_init__(self):
        if self.patches < 1 or self.samples < 1:
            raise ValueError("patches and samples must be >= 1")
        if self.group not in GROUPINGS:
            raise ValueError(f"group must be one of {GROUPINGS}, got {self.group!r}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.kmeans_iters < 1:
            raise ValueError(f"kmeans_iters must be >= 1, got {self.kmeans_iters}")


@dataclass
class TrainConfig:
    epochs: int = 120
    batch_size: int = 64
    base_lr: float = 5e-4
    warmup_epochs: int = 10
    weight_decay: float = 0.01
    clip_norm: float = 0.1
    seed: int = 0
    drop_ratio: float = 0.5
    mask_ratio: float = 0.25
    data: str = "synthetic"
    scenes: int = 64
    num_points: int = 20000
    color: bool = False
    augment: bool = True
    shuffle: bool = True
    resample_partition: bool = True
    checkpoint_every: int = 0
    dtype: str = "float64"
    out_dir: str = "runs/pretrain"

    def __post_init__(self):
        checks = [
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.base_lr > 0, "base_lr must be positive"),
            (self.warmup_epochs >= 0, "warmup_epochs must be >= 0"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.clip_norm > 0, "clip_norm must be positive"),
            (self.seed >= 0, "seed must be >= 0"),
            (self.scenes >= 1, "scenes must be >= 1"),
            (self.num_points >= 1, "num_points must be >= 1"),
            (self.checkpoint_every >= 0, "checkpoint_every must be >= 0"),
            (self.dtype in ("float64", "float32"), "dtype must be float64 or float32"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValueError(message)

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.drop_ratio, self.mask_ratio, 1.0 - self.drop_ratio - self.mask_ratio)


@dataclass
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    patchify: PatchifyConfig = field(default_factory=PatchifyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    pos_embed: str = "global"
    fourier_sigma: float = 1.0

    def __post_init__(self):
        try:
            partition_sizes(self.patchify.patches, self.train.ratios)
        except ValueError as exc:
            raise ValueError(f"drop/mask ratios: {exc}") from None
        if self.train.num_points < self.patchify.patches:
            raise ValueError(f"num_points ({self.train.num_points}) is below the patch count ({self.patchify.patches})")
        self.model_config()

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            samples=self.patchify.samples,
            extra_channels=3 if self.train.color else 0,
            pos_embed=self.pos_embed,
            fourier_sigma=self.fourier_sigma,
            encoder=self.encoder,
            decoder=self.decoder,
        )

    def to_text(self) -> str:
        """Canonical file form: every key, in declaration order."""
        lines = []
        for section in ("encoder", "decoder", "patchify", "train"):
            obj = getattr(self, section)
            lines.append(f"[{section}]")
            for f in dataclasses.fields(obj):
                lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
            if section == "encoder":
                lines += [f"{k} = {_format(getattr(self, k))}" for k in _MODEL_KEYS]
            lines.append("")
        return "\n".join(lines)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def _build(cls, values: dict, where: str):
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"{where}: unknown key {key!r}")
        kwargs[key] = _coerce(raw, getattr(defaults, key), f"{where}.{key}")
    return cls(**kwargs)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                       delimiters=("=",), interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    unknown = set(parser.sections()) - {"encoder", "decoder", "patchify", "train"}
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")

    def section(name):
        return dict(parser.items(name)) if parser.has_section(name) else {}

    try:
        enc_values = section("encoder")
        model_values = {k: enc_values.pop(k) for k in _MODEL_KEYS if k in enc_values}
        kwargs = {
            "encoder": _build(EncoderConfig, enc_values, f"{source} [encoder]"),
            "decoder": _build(DecoderConfig, section("decoder"), f"{source} [decoder]"),
            "patchify": _build(PatchifyConfig, section("patchify"), f"{source} [patchify]"),
            "train": _build(TrainConfig, section("train"), f"{source} [train]"),
        }
        if "pos_embed" in model_values:
            kwargs["pos_embed"] = model_values["pos_embed"].strip()
        if "fourier_sigma" in model_values:
            kwargs["fourier_sigma"] = _coerce(model_values["fourier_sigma"], 1.0, f"{source} [encoder].fourier_sigma")
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
