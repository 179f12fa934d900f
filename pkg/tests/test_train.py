import dataclasses

import numpy as np
import pytest

from conftest import TINY_CONFIG, assert_bit_identical
from plainpoint import train as train_mod
from plainpoint.checkpoint import load_checkpoint
from plainpoint.config import parse_config
from plainpoint.fileio import save_point_cloud
from plainpoint.patchify import patchify
from plainpoint.rng import Rng
from plainpoint.synthetic import synthetic_scene
from plainpoint.train import (
    SceneSource,
    TrainingDivergedError,
    build_model,
    load_model,
    prepare_sample,
    pretrain_loop,
    reconstruct,
)


def cfg_with(**train):
    cfg = parse_config(TINY_CONFIG)
    return dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, **train))


def test_zero_epochs_writes_initial_parameters(tmp_path):
    cfg = cfg_with(epochs=0)
    result = pretrain_loop(cfg, tmp_path)
    assert result.losses == []
    assert result.metrics.read_text() == ""
    ck = load_checkpoint(result.checkpoint)
    fresh = build_model(cfg).store.state_dict()
    assert sorted(ck.arrays) == sorted(fresh)
    for name, value in fresh.items():
        assert_bit_identical(ck.arrays[name], value)
    assert ck.seed == 5 and parse_config(ck.config_text) == cfg


def test_metrics_format_and_schedule(tmp_path):
    cfg = cfg_with()
    result = pretrain_loop(cfg, tmp_path)
    lines = result.metrics.read_text().splitlines()
    assert len(lines) == 4  # 3 scenes, batch 2, 2 epochs
    steps, losses, lrs = zip(*(line.split() for line in lines))
    assert [int(s) for s in steps] == [0, 1, 2, 3]
    assert [float(v) for v in losses] == result.losses
    lrs = [float(v) for v in lrs]
    assert lrs[0] > 0 and max(lrs) <= 5e-4 + 1e-18
    assert lrs[1] == pytest.approx(5e-4)  # end of the one-epoch warmup
    assert lrs[3] < lrs[2]


def test_runs_are_byte_identical(tmp_path):
    cfg = cfg_with()
    a = pretrain_loop(cfg, tmp_path / "a")
    b = pretrain_loop(cfg, tmp_path / "b")
    assert a.metrics.read_bytes() == b.metrics.read_bytes()
    assert a.checkpoint.read_bytes() == b.checkpoint.read_bytes()
    c = pretrain_loop(cfg_with(seed=6), tmp_path / "c")
    assert c.metrics.read_bytes() != a.metrics.read_bytes()


def test_threads_do_not_change_results(tmp_path, monkeypatch):
    cfg = cfg_with()
    serial = pretrain_loop(cfg, tmp_path / "serial")
    monkeypatch.setenv("PLAINPOINT_THREADS", "3")
    threaded = pretrain_loop(cfg, tmp_path / "threaded")
    assert serial.metrics.read_bytes() == threaded.metrics.read_bytes()
    assert serial.checkpoint.read_bytes() == threaded.checkpoint.read_bytes()


def test_bad_thread_setting(tmp_path, monkeypatch):
    monkeypatch.setenv("PLAINPOINT_THREADS", "zero")
    with pytest.raises(ValueError, match="PLAINPOINT_THREADS"):
        pretrain_loop(cfg_with(), tmp_path)


def test_periodic_checkpoints(tmp_path):
    cfg = cfg_with(epochs=3, checkpoint_every=2)
    result = pretrain_loop(cfg, tmp_path)
    assert [p.name for p in result.checkpoints] == ["checkpoint_epoch0002.bin"]
    assert result.checkpoints[0].exists() and result.checkpoint.exists()


def test_loss_decreases_on_tiny_run(tmp_path):
    cfg = cfg_with(epochs=30, scenes=2, resample_partition=False, augment=False, shuffle=False,
                   warmup_epochs=0, base_lr=0.002)
    losses = pretrain_loop(cfg, tmp_path).losses
    assert losses[-1] < 0.7 * losses[0]


def test_divergence_dump(tmp_path, monkeypatch):
    calls = {"n": 0}
    real = train_mod.mae_loss

    def poisoned(rec):
        calls["n"] += 1
        loss = real(rec)
        return loss * np.nan if calls["n"] > 2 else loss

    monkeypatch.setattr(train_mod, "mae_loss", poisoned)
    with pytest.raises(TrainingDivergedError, match="step 1"):
        pretrain_loop(cfg_with(), tmp_path)
    dump = (tmp_path / "diverged.txt").read_text()
    assert "step: 1" in dump and "non-finite" in dump and "(5, ('train', 'step', 1, 'item', 0))" in dump


def test_scene_source_from_files(tmp_path):
    for i in range(2):
        save_point_cloud(synthetic_scene(i, 400), tmp_path / f"s{i}.xyz")
    cfg = cfg_with(data=f"{tmp_path}/*.xyz")
    source = SceneSource(cfg)
    assert len(source) == 2 and len(source[0]) == 256
    assert source[1] is source[1]
    with pytest.raises(FileNotFoundError):
        SceneSource(cfg_with(data=f"{tmp_path}/*.ply"))


def test_fixed_partition_is_per_scene():
    cfg = cfg_with(resample_partition=False)
    source = SceneSource(cfg)
    a = prepare_sample(cfg, source, 0, Rng(1))
    b = prepare_sample(cfg, source, 0, Rng(2))
    assert np.array_equal(a.partition.masked, b.partition.masked)
    cfg = cfg_with()
    c, d = (prepare_sample(cfg, SceneSource(cfg), 0, Rng(s)) for s in (1, 2))
    assert not np.array_equal(c.partition.masked, d.partition.masked)


def test_float32_mode(tmp_path):
    result = pretrain_loop(cfg_with(dtype="float32", epochs=1), tmp_path)
    assert np.isfinite(result.losses).all()


def test_load_model_and_reconstruct(tmp_path):
    cfg = cfg_with()
    result = pretrain_loop(cfg, tmp_path)
    model, loaded_cfg = load_model(result.checkpoint)
    assert loaded_cfg == cfg
    pc = synthetic_scene(9, 256)
    clouds = reconstruct(model, cfg, pc, mask_ratio=0.5, drop_ratio=0.25, seed=1)
    rows = patchify(pc, 8, 8, "fpc").unique_rows()
    assert len(clouds.original) == sum(len(r) for r in rows)
    # 8 patches: 2 dropped, 4 masked, 2 reserved
    assert len({tuple(c) for c in clouds.original.extras}) == 8
    assert len({tuple(c) for c in clouds.masked.extras}) == 2
    assert len({tuple(c) for c in clouds.reconstructed.extras}) == 6
    assert len(clouds.reconstructed) == len(clouds.masked) + 4 * 8
    assert np.isfinite(clouds.loss)
