import numpy as np
import pytest
from hypothesis import given, strategies as st

from plainpoint.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from plainpoint.rng import Rng


def arrays(seed=0):
    r = Rng(seed)
    return {"b.weight": r.normal((3, 4)), "a.bias": r.normal(4), "scalar": np.array(2.5), "empty": np.zeros((0, 3))}


def test_round_trip(tmp_path):
    path = tmp_path / "c.bin"
    save_checkpoint(path, arrays(), "[train]\nseed = 3\n", 3)
    ck = load_checkpoint(path)
    assert ck.seed == 3 and ck.config_text == "[train]\nseed = 3\n"
    assert list(ck.arrays) == sorted(arrays())
    for name, value in arrays().items():
        assert ck.arrays[name].shape == value.shape
        assert ck.arrays[name].tobytes() == value.astype("<f8").tobytes()


def test_layout_is_name_sorted_and_order_independent():
    a = arrays()
    reordered = dict(reversed(list(a.items())))
    blob = encode_checkpoint(a, "x", 0)
    assert blob == encode_checkpoint(reordered, "x", 0)
    assert blob.startswith(MAGIC)
    assert blob.index(b"a.bias") < blob.index(b"b.weight") < blob.index(b"empty") < blob.index(b"scalar")


@given(st.integers(0, 10**6))
def test_encode_decode_encode_is_stable(seed):
    blob = encode_checkpoint(arrays(seed), "cfg", seed)
    ck = decode_checkpoint(blob)
    assert encode_checkpoint(ck.arrays, ck.config_text, ck.seed) == blob


def test_float32_arrays_are_widened():
    blob = encode_checkpoint({"w": np.ones(3, dtype=np.float32)}, "", 0)
    assert decode_checkpoint(blob).arrays["w"].dtype == np.float64


def test_corrupt_files():
    blob = encode_checkpoint(arrays(), "cfg", 1)
    with pytest.raises(ValueError, match="magic"):
        decode_checkpoint(b"NOTMAGIC" + blob[8:])
    for cut in (10, len(blob) // 2, len(blob) - 1):
        with pytest.raises(ValueError, match="truncated"):
            decode_checkpoint(blob[:cut])
    with pytest.raises(ValueError, match="trailing"):
        decode_checkpoint(blob + b"\x00")
