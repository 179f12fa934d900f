import pytest

from conftest import TINY_CONFIG
from plainpoint.config import ConfigError, RunConfig, load_config, parse_config


def test_defaults():
    cfg = parse_config("")
    assert cfg.train.base_lr == 5e-4 and cfg.train.warmup_epochs == 10
    assert cfg.train.ratios == (0.5, 0.25, 0.25)
    assert cfg.patchify.group == "fpc"
    assert cfg.pos_embed == "global"


def test_tiny_config():
    cfg = parse_config(TINY_CONFIG)
    assert cfg.encoder.layers == 1 and cfg.decoder.channels == 16
    assert cfg.patchify.patches == 8 and cfg.train.seed == 5
    assert cfg.model_config().samples == 8


def test_to_text_round_trip():
    cfg = parse_config(TINY_CONFIG + "drop_ratio = 0.25\nmask_ratio = 0.5\naugment = off\n")
    text = cfg.to_text()
    again = parse_config(text)
    assert again == cfg
    assert again.to_text() == text


@pytest.mark.parametrize("text, fragment", [
    ("[encoder]\nwidth = 3\n", "unknown key 'width'"),
    ("[optimizer]\nlr = 1\n", "unknown section"),
    ("[train]\nepochs = many\n", "cannot parse"),
    ("[train]\naugment = maybe\n", "cannot parse"),
    ("[train]\nbatch_size = 0\n", "batch_size"),
    ("[train]\ndrop_ratio = 0.5\nmask_ratio = 0.5\n", "ratio"),
    ("[patchify]\ngroup = voxel\n", "group"),
    ("[encoder]\nchannels = 30\n", "divisible"),
    ("[encoder]\npos_embed = rotary\n", "position embedding"),
    ("[train]\nnum_points = 10\n", "num_points"),
    ("[train]\nepochs = 1\nepochs = 2\n", "epochs"),
    ("epochs = 1\n", "section"),
])
def test_rejections(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text, "t.cfg")


def test_keys_are_case_sensitive():
    with pytest.raises(ConfigError):
        parse_config("[train]\nEpochs = 1\n")


def test_inline_comments():
    assert parse_config("[train]\nepochs = 3  # short\n").train.epochs == 3


def test_missing_file_names_path(tmp_path):
    missing = tmp_path / "missing.cfg"
    with pytest.raises(ConfigError, match="missing.cfg"):
        load_config(missing)


def test_direct_construction_validates():
    with pytest.raises(ValueError):
        RunConfig(train=parse_config("").train.__class__(drop_ratio=0.9, mask_ratio=0.1))
