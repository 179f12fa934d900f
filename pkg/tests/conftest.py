import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from plainpoint.geometry import PointCloud
from plainpoint.rng import Rng

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return Rng(1234)


def random_cloud(seed: int, n: int = 256, extras: bool = False) -> PointCloud:
    r = Rng(seed).split("cloud")
    return PointCloud(r.random((n, 3)), r.random((n, 3)) if extras else None)


@pytest.fixture
def cloud():
    return random_cloud(0)


def assert_bit_identical(a, b):
    a, b = np.asarray(a), np.asarray(b)
    assert a.shape == b.shape
    assert a.tobytes() == b.tobytes()


TINY_CONFIG = """\
# small enough for a few seconds of training
[encoder]
layers = 1
channels = 16
heads = 2
ffn_channels = 16
pos_embed = global

[decoder]
layers = 1
channels = 16
heads = 2
ffn_channels = 16

[patchify]
patches = 8
samples = 8

[train]
epochs = 2
batch_size = 2
scenes = 3
num_points = 256
warmup_epochs = 1
seed = 5
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG)
    return path


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
