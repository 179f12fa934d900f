"""Command-line entry point: ``plainpoint <command> [options]``."""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .fileio import PointCloudFormatError, load_point_cloud, patch_colored_cloud, save_point_cloud
from .patchify import DETECTION_DEFAULTS, GROUPINGS, patchify
from .rng import Rng
from .synthetic import synthetic_scene

DEFAULT_PATCHES = 512


class CommandError(Exception):
    """A user-facing failure: reported on stderr with exit status 1."""


def _ratio(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a ratio in [0, 1), got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _with_suffix(path: Path, tag: str, fmt: str) -> Path:
    return path.with_name(f"{path.name}_{tag}.{fmt}")


def cmd_patchify(args) -> int:
    pc = load_point_cloud(args.input)
    if args.patches > len(pc):
        raise CommandError(f"--patches {args.patches} exceeds the {len(pc)} points in {args.input}")
    rng = Rng(args.seed) if args.seed is not None else None
    ps = patchify(pc, args.patches, args.samples, args.group, args.radius, rng=rng)
    out = Path(args.out)
    save_point_cloud(patch_colored_cloud(pc, ps, args.seed or 0), out)
    assign_path = out.with_suffix(".assign.txt")
    lines = [f"# {ps.num_patches} patches x {ps.samples} samples, grouping {ps.grouping}",
             "# key_index: point indices"]
    lines += [f"{key}: {' '.join(map(str, row))}" for key, row in zip(ps.keys.source_indices, ps.assign)]
    assign_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out} and {assign_path}")
    return 0


def cmd_pretrain(args) -> int:
    from .train import pretrain_loop

    cfg = load_config(args.config)
    result = pretrain_loop(cfg, args.out_dir)
    last = f"{result.losses[-1]:.6g}" if result.losses else "n/a"
    print(f"{len(result.losses)} steps, final loss {last}; wrote {result.metrics} and {result.checkpoint}")
    return 0


def cmd_reconstruct(args) -> int:
    from .train import load_model, reconstruct

    if not Path(args.checkpoint).exists():
        raise CommandError(f"checkpoint not found: {args.checkpoint}")
    if args.mask_ratio + args.drop_ratio >= 1.0:
        raise CommandError("--mask-ratio plus --drop-ratio must leave some patches visible")
    model, cfg = load_model(args.checkpoint)
    pc = load_point_cloud(args.input) if args.input else synthetic_scene(args.seed, cfg.train.num_points,
                                                                          color=cfg.train.color)
    clouds = reconstruct(model, cfg, pc, args.mask_ratio, args.drop_ratio, args.seed)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    for tag in ("original", "masked", "reconstructed"):
        path = _with_suffix(prefix, tag, args.format)
        save_point_cloud(getattr(clouds, tag), path, args.format)
        print(f"wrote {path}")
    print(f"masked-patch loss {clouds.loss:.6g}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_gradient_suite

    entries = run_gradient_suite(args.seeds, report=print)
    failed = [e.name for e in entries if not e.passed]
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(entries)} gradient checks passed")
    return 0


def cmd_bench(args) -> int:
    pc = synthetic_scene(args.seed, args.points)
    print(f"{args.points} points, {args.patches} patches x {args.samples} samples, best of {args.repeats}")
    print(f"{'grouping':<8} {'seconds':>9} {'points/s':>12}")
    for group in GROUPINGS:
        best = np.inf
        for _ in range(args.repeats):
            start = time.perf_counter()
            patchify(pc, args.patches, args.samples, group, args.radius)
            best = min(best, time.perf_counter() - start)
        print(f"{group:<8} {best:>9.3f} {args.points / best:>12.0f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plainpoint", description="Point cloud patchifying and masked-autoencoder pre-training.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("patchify", help="split a cloud into patches and write a patch-colored copy")
    p.add_argument("input", help="XYZ or ASCII PLY point cloud")
    samples, group, _ = DETECTION_DEFAULTS[DEFAULT_PATCHES]
    p.add_argument("--patches", type=_positive_int, default=DEFAULT_PATCHES)
    p.add_argument("--samples", type=_positive_int, default=samples)
    p.add_argument("--group", choices=GROUPINGS, default=group)
    p.add_argument("--radius", type=float, default=0.2, help="ball query radius")
    p.add_argument("--seed", type=int, default=None, help="enables random in-patch subsampling")
    p.add_argument("--out", required=True, help="output cloud (.ply or .xyz); assignments go next to it")
    p.set_defaults(run=cmd_patchify)

    p = sub.add_parser("pretrain", help="run masked-autoencoder pre-training from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None, help="overrides [train] out_dir")
    p.set_defaults(run=cmd_pretrain)

    p = sub.add_parser("reconstruct", help="write original, masked and reconstructed clouds")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", default=None, help="point cloud; a synthetic scene when omitted")
    p.add_argument("--mask-ratio", type=_ratio, default=0.75)
    p.add_argument("--drop-ratio", type=_ratio, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("ply", "xyz"), default="ply")
    p.add_argument("--out", default="reconstruction", help="output prefix")
    p.set_defaults(run=cmd_reconstruct)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--seeds", type=_positive_int, default=20, help="seeds per primitive")
    p.set_defaults(run=cmd_gradcheck)

    p = sub.add_parser("bench", help="patchifier throughput per grouping")
    p.add_argument("--points", type=_positive_int, default=20000)
    p.add_argument("--patches", type=_positive_int, default=512)
    p.add_argument("--samples", type=_positive_int, default=128)
    p.add_argument("--radius", type=float, default=0.2)
    p.add_argument("--repeats", type=_positive_int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(run=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except (CommandError, ConfigError, PointCloudFormatError, OSError, ValueError) as exc:
        print(f"plainpoint {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
