import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import assert_bit_identical
from plainpoint import tensor as T
from plainpoint.embed import (
    FourierPosEmbed,
    GlobalPosEmbed,
    MLPPosEmbed,
    NoPosEmbed,
    PatchEmbed,
    make_pos_embed,
    patch_widths,
)
from plainpoint.nn import ForwardContext, ParameterStore
from plainpoint.rng import Rng

EVAL = ForwardContext()


def jittered_store(seed=0):
    return ParameterStore(seed)


def perturb_buffers(store, seed):
    # non-trivial running statistics so evaluation-mode normalization does real work
    r = Rng(seed)
    for name, buf in store.buffers.items():
        buf[...] = r.split(name).uniform(0.5, 1.5, buf.shape)


def test_default_widths():
    assert patch_widths(256) == (64, 128, 256)


def test_patch_embed_shapes_and_names():
    s = ParameterStore()
    pe = PatchEmbed(s, "pe", 3, 32)
    out = pe(Rng(0).normal((5, 7, 3)), EVAL)
    assert out.shape == (5, 32)
    assert "pe.mlp.0.weight" in s and "pe.mlp.0.bn.gamma" in s
    with pytest.raises(ValueError):
        pe(np.zeros((2, 3, 6)), EVAL)


@given(st.integers(0, 10**6))
def test_patch_embed_point_order_invariance(seed):
    s = ParameterStore(seed)
    pe = PatchEmbed(s, "pe", 3, 16)
    perturb_buffers(s, seed)
    x = Rng(seed).normal((4, 9, 3))
    perm = Rng(seed).split("p").permutation(9)
    assert_bit_identical(pe(x, EVAL).data, pe(x[:, perm], EVAL).data)


def test_patch_embed_identical_patches_and_singleton():
    s = ParameterStore(3)
    pe = PatchEmbed(s, "pe", 3, 16)
    x = Rng(1).normal((1, 6, 3))
    out = pe(np.concatenate([x, x]), EVAL).data
    assert_bit_identical(out[0], out[1])
    single = Rng(2).normal((3, 1, 3))
    per_point = pe.mlp(T.as_tensor(single), EVAL).data[:, 0]
    assert_bit_identical(pe(single, EVAL).data, per_point)


@given(st.integers(0, 10**6))
def test_patch_embed_rows_are_independent_in_evaluation(seed):
    s = ParameterStore(seed)
    pe = PatchEmbed(s, "pe", 3, 16)
    x = Rng(seed).normal((5, 4, 3))
    full = pe(x, EVAL).data
    assert_bit_identical(pe(x[2:3], EVAL).data[0], full[2])


def test_mlp_pos_embed_examples():
    s = ParameterStore(0)
    emb = MLPPosEmbed(s, "pos", 32)
    keys = Rng(0).normal((4, 3))
    keys[3] = keys[1]
    out = emb(keys, EVAL).data
    assert_bit_identical(out[1], out[3])
    perm = np.array([2, 0, 3, 1])
    assert_bit_identical(emb(keys[perm], EVAL).data, out[perm])
    emb.mlp.last.weight.data[...] = 0.0
    emb.mlp.last.bias.data[...] = 0.0
    assert np.all(emb(keys, EVAL).data == 0.0)


def test_fourier_examples():
    emb = FourierPosEmbed(16, sigma=1.0, seed=4)
    out = emb(np.zeros((2, 3)), EVAL).data
    np.testing.assert_array_equal(out[:, :8], 0.0)
    np.testing.assert_array_equal(out[:, 8:], 1.0)
    vals = emb(Rng(1).normal((50, 3), scale=10.0), EVAL).data
    assert np.all(np.abs(vals) <= 1.0)
    np.testing.assert_array_equal(emb.frequencies, FourierPosEmbed(16, 1.0, 4).frequencies)
    with pytest.raises(ValueError):
        FourierPosEmbed(15)


def test_none_pos_embed():
    assert np.all(NoPosEmbed(8)(np.ones((3, 3)), EVAL).data == 0.0)


def test_global_singleton():
    s = ParameterStore(1)
    emb = GlobalPosEmbed(s, "g", 32)
    key = Rng(0).normal((1, 3))
    lifted = emb.lift(T.as_tensor(key), EVAL)
    expected = emb.fuse(T.concat([lifted, T.as_tensor(key)], axis=-1), EVAL)
    assert_bit_identical(emb(key, EVAL).data, expected.data)


@given(st.integers(0, 10**6))
def test_global_permutation(seed):
    s = ParameterStore(seed)
    emb = GlobalPosEmbed(s, "g", 16)
    keys = Rng(seed).normal((6, 3))
    perm = Rng(seed).split("perm").permutation(6)
    assert_bit_identical(emb.global_feature(keys[perm], EVAL).data, emb.global_feature(keys, EVAL).data)
    np.testing.assert_allclose(emb(keys[perm], EVAL).data, emb(keys, EVAL).data[perm], rtol=0, atol=1e-12)


def test_global_duplicate_key_leaves_rows_unchanged():
    s = ParameterStore(2)
    emb = GlobalPosEmbed(s, "g", 16)
    keys = Rng(3).normal((4, 3))
    with_dup = np.concatenate([keys, keys[1:2]])
    assert_bit_identical(emb(with_dup, EVAL).data[:4], emb(keys, EVAL).data)


@given(st.integers(0, 10**6))
def test_global_rows_depend_on_other_keys(seed):
    s = ParameterStore(seed)
    emb = GlobalPosEmbed(s, "g", 16)
    keys = Rng(seed).normal((5, 3))
    moved = keys.copy()
    moved[4] += 5.0
    # row 0 sees key 4 through the pooled feature unless key 4 never wins the max
    before, after = emb(keys, EVAL).data[0], emb(moved, EVAL).data[0]
    g_before, g_after = emb.global_feature(keys, EVAL).data, emb.global_feature(moved, EVAL).data
    assert np.array_equal(before, after) == np.array_equal(g_before, g_after)


def test_make_pos_embed_kinds():
    s = ParameterStore()
    assert make_pos_embed("global", s, "a", 8).kind == "global"
    assert make_pos_embed("mlp", s, "b", 8).kind == "mlp"
    assert make_pos_embed("fourier", s, "c", 8).kind == "fourier"
    assert make_pos_embed("none", s, "d", 8).kind == "none"
    with pytest.raises(ValueError):
        make_pos_embed("rotary", s, "e", 8)
