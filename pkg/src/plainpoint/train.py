"""Pre-training loop, checkpoint loading and reconstruction export.

Every random choice in a run (scene order, augmentation, patch subsampling,
partitions, dropout) comes from one ``Rng`` keyed by the run seed and the
step, so two runs with the same configuration write identical files.
"""
from __future__ import annotations

import glob
import math
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .augment import AugmentFlags, augment
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, parse_config
from .fileio import load_point_cloud, patch_colors
from .geometry import PointCloud
from .mae import MaskedAutoencoder, MaskPartition, mae_loss, partition_patches
from .nn import ForwardContext, ParameterStore
from .optim import OptimizerState, adamw_step, lr_schedule
from .patchify import PatchSet, PatchTensor, gather_patches, patchify
from .rng import Rng
from .synthetic import synthetic_scene

THREADS_ENV = "PLAINPOINT_THREADS"


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainResult:
    losses: list[float]
    checkpoint: Path
    metrics: Path
    model: MaskedAutoencoder
    checkpoints: list[Path] = field(default_factory=list)


def build_model(cfg: RunConfig) -> MaskedAutoencoder:
    store = ParameterStore(cfg.train.seed, dtype=np.dtype(cfg.train.dtype))
    return MaskedAutoencoder(cfg.model_config(), store)


def load_model(path) -> tuple[MaskedAutoencoder, RunConfig]:
    ckpt = load_checkpoint(path)
    cfg = parse_config(ckpt.config_text, f"{path} (embedded config)")
    model = build_model(cfg)
    model.store.load_state_dict(ckpt.arrays)
    return model, cfg


def scene_seed(run_seed: int, index: int) -> int:
    return Rng(run_seed).split("scene-seed", index).integers(0, 2**31)


class SceneSource:
    """Indexable collection of training clouds, synthetic or read from files."""

    def __init__(self, cfg: RunConfig):
        t = cfg.train
        self.cfg = cfg
        if t.data == "synthetic":
            self.paths = None
            self.size = t.scenes
        else:
            self.paths = sorted(glob.glob(t.data, recursive=True))
            if not self.paths:
                raise FileNotFoundError(f"no point cloud files match {t.data!r}")
            self.size = len(self.paths)
        self._cache: dict[int, PointCloud] = {}

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, i: int) -> PointCloud:
        if i not in self._cache:
            t = self.cfg.train
            if self.paths is None:
                pc = synthetic_scene(scene_seed(t.seed, i), t.num_points, color=t.color)
            else:
                pc = load_point_cloud(self.paths[i])
                if len(pc) > t.num_points:
                    pick = np.sort(Rng(t.seed).split("file-subset", i).choice(len(pc), t.num_points))
                    pc = pc.subset(pick)
                if t.color and pc.extras is None:
                    raise ValueError(f"{self.paths[i]}: color is enabled but the file has no colors")
                if not t.color and pc.extras is not None:
                    pc = PointCloud(pc.coords)
            self._cache[i] = pc
        return self._cache[i]


@dataclass
class Sample:
    scene: int
    patches: PatchTensor
    partition: MaskPartition


def prepare_sample(cfg: RunConfig, source: SceneSource, scene: int, rng: Rng) -> Sample:
    """Augment, patchify and partition one scene."""
    p, t = cfg.patchify, cfg.train
    pc = source[scene]
    if t.augment:
        pc = augment(pc, rng.split("augment"), AugmentFlags())
    ps = patchify(pc, p.patches, p.samples, p.group, p.radius, p.kmeans_iters,
                  rng=rng.split("patchify") if (p.random_sample or p.random_start) else None,
                  random_start=p.random_start)
    pt = gather_patches(pc, ps)
    dtype = np.dtype(t.dtype)
    pt = PatchTensor(pt.offsets.astype(dtype), pt.key_coords.astype(dtype),
                     None if pt.extras is None else pt.extras.astype(dtype))
    part_rng = rng.split("partition") if t.resample_partition else Rng(t.seed).split("fixed-partition", scene)
    return Sample(scene, pt, partition_patches(p.patches, t.ratios, part_rng))


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be >= 1, got {n}")
    return n


def _schedule(cfg: RunConfig, steps_per_epoch: int):
    t = cfg.train
    total = t.epochs * steps_per_epoch
    warmup = min(t.warmup_epochs * steps_per_epoch, total)
    # shifted by one so the first step already has a positive rate
    return lambda step: lr_schedule(step + 1, total + 1, warmup, t.base_lr)


def _epoch_batches(cfg: RunConfig, n: int, epoch: int) -> list[list[int]]:
    t = cfg.train
    order = Rng(t.seed).split("order", epoch).permutation(n) if t.shuffle else np.arange(n)
    return [[int(i) for i in order[s : s + t.batch_size]] for s in range(0, n, t.batch_size)]


def _dump_divergence(out_dir: Path, step: int, epoch: int, batch: list[int], seeds: list[tuple], reason: str) -> Path:
    path = out_dir / "diverged.txt"
    lines = [f"reason: {reason}", f"step: {step}", f"epoch: {epoch}", f"scenes: {' '.join(map(str, batch))}",
             "batch rng paths (seed, path):"]
    lines += [f"  {s!r}" for s in seeds]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _prefetch(pool: ThreadPoolExecutor, fn, items, depth: int):
    # bounded look-ahead; results come back in submission order
    pending = deque()
    for item in items:
        pending.append(pool.submit(fn, item))
        if len(pending) > depth:
            yield pending.popleft().result()
    while pending:
        yield pending.popleft().result()


def pretrain_loop(cfg: RunConfig, out_dir=None, model: MaskedAutoencoder | None = None) -> TrainResult:
    """Run masked-autoencoder pre-training and write metrics plus checkpoints.

    The metrics log holds one ``step loss lr`` line per optimizer step.
    """
    t = cfg.train
    out = Path(out_dir if out_dir is not None else t.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = model or build_model(cfg)
    store = model.store
    source = SceneSource(cfg)
    steps_per_epoch = math.ceil(len(source) / t.batch_size)
    lr_at = _schedule(cfg, steps_per_epoch)
    opt = OptimizerState(base_lr=t.base_lr, weight_decay=t.weight_decay, clip_norm=t.clip_norm)
    config_text = cfg.to_text()
    metrics_path = out / "metrics.log"
    run_rng = Rng(t.seed).split("train")
    losses: list[float] = []
    saved: list[Path] = []
    threads = _thread_count()
    pool = ThreadPoolExecutor(threads) if threads > 1 else None

    plan: list[tuple[int, int, list[int]]] = []
    for epoch in range(t.epochs):
        for batch in _epoch_batches(cfg, len(source), epoch):
            plan.append((epoch, len(plan), batch))

    def prepare(entry):
        epoch, step, batch = entry
        step_rng = run_rng.split("step", step)
        return [prepare_sample(cfg, source, s, step_rng.split("item", j)) for j, s in enumerate(batch)]

    # warm the scene cache serially; SceneSource is not written from worker threads
    for i in sorted({s for _, _, b in plan for s in b}):
        source[i]
    prepared = _prefetch(pool, prepare, plan, 2 * threads) if pool else map(prepare, plan)

    try:
        with open(metrics_path, "w", encoding="utf-8") as log:
            for (epoch, step, batch), samples in zip(plan, prepared):
                step_rng = run_rng.split("step", step)
                lr = lr_at(step)
                store.zero_grad()
                try:
                    total = None
                    for j, sample in enumerate(samples):
                        ctx = ForwardContext(training=True, rng=step_rng.split("dropout", j))
                        loss = mae_loss(model(sample.patches, sample.partition, ctx))
                        total = loss if total is None else total + loss
                    loss = total / len(samples)
                    value = loss.item()
                    if not math.isfinite(value):
                        raise FloatingPointError(f"non-finite loss {value}")
                    T.backward(loss)
                    adamw_step(store, opt, lr)
                except FloatingPointError as exc:
                    seeds = [(t.seed, ("train", "step", step, "item", j)) for j in range(len(batch))]
                    dump = _dump_divergence(out, step, epoch, batch, seeds, str(exc))
                    raise TrainingDivergedError(f"training diverged at step {step}: {exc}; details in {dump}") from exc
                losses.append(value)
                log.write(f"{step} {value!r} {lr!r}\n")
                last_in_epoch = step == len(plan) - 1 or plan[step + 1][0] != epoch
                if last_in_epoch and t.checkpoint_every and (epoch + 1) % t.checkpoint_every == 0:
                    path = out / f"checkpoint_epoch{epoch + 1:04d}.bin"
                    save_checkpoint(path, store.state_dict(), config_text, t.seed)
                    saved.append(path)
    finally:
        if pool:
            pool.shutdown(wait=True, cancel_futures=True)
    final = out / "checkpoint.bin"
    save_checkpoint(final, store.state_dict(), config_text, t.seed)
    store.clear_grad()
    return TrainResult(losses, final, metrics_path, model, saved)


@dataclass
class ReconstructionClouds:
    original: PointCloud
    masked: PointCloud
    reconstructed: PointCloud
    loss: float


def reconstruct(model: MaskedAutoencoder, cfg: RunConfig, pc: PointCloud, mask_ratio: float = 0.75,
                drop_ratio: float = 0.0, seed: int = 0) -> ReconstructionClouds:
    """Patch-colored views of a cloud, its visible part, and the model's completion.

    ``original`` shows every patch, ``masked`` only the patches the encoder
    sees, and ``reconstructed`` the visible patches plus predicted points for
    the masked ones. Dropped patches are absent from the last two.
    """
    p = cfg.patchify
    ratios = (drop_ratio, mask_ratio, 1.0 - drop_ratio - mask_ratio)
    if cfg.train.color != (pc.extras is not None):
        pc = PointCloud(pc.coords, pc.extras if cfg.train.color else None)
        if cfg.train.color:
            raise ValueError("the model expects colored input")
    ps: PatchSet = patchify(pc, p.patches, p.samples, p.group, p.radius, p.kmeans_iters)
    pt = gather_patches(pc, ps)
    part = partition_patches(p.patches, ratios, Rng(seed).split("reconstruct"))
    rec = model(pt, part, ForwardContext())
    loss = mae_loss(rec).item()
    colors = patch_colors(ps.num_patches, seed)
    rows = ps.unique_rows()

    def painted(patch_ids, coords_for):
        pts, cols = [], []
        for m in patch_ids:
            xyz = coords_for(int(m))
            pts.append(xyz)
            cols.append(np.repeat(colors[m : m + 1], len(xyz), axis=0))
        return PointCloud(np.concatenate(pts), np.concatenate(cols))

    every = np.arange(ps.num_patches)
    original = painted(every, lambda m: pc.coords[rows[m]])
    visible = painted(part.reserved, lambda m: pc.coords[rows[m]])
    pred = rec.pred_offsets.data + pt.key_coords[part.masked][:, None, :]
    pred_row = {int(m): i for i, m in enumerate(part.masked)}
    shown = np.sort(np.concatenate([part.reserved, part.masked]))
    completed = painted(shown, lambda m: pred[pred_row[m]] if m in pred_row else pc.coords[rows[m]])
    return ReconstructionClouds(original, visible, completed, loss)
