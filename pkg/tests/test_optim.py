import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from plainpoint.nn import ParameterStore
from plainpoint.optim import OptimizerState, adamw_step, clip_grad_norm, global_grad_norm, lr_schedule
from plainpoint.rng import Rng


def store_with(value, grad):
    s = ParameterStore()
    p = s.add("p", np.array(value, dtype=np.float64))
    p.grad = np.array(grad, dtype=np.float64)
    return s


def test_zero_gradients_without_decay_leave_parameters():
    s = store_with([1.0, -2.0], [0.0, 0.0])
    adamw_step(s, OptimizerState(weight_decay=0.0, clip_norm=None), lr=0.1)
    np.testing.assert_array_equal(s["p"].data, [1.0, -2.0])


def test_single_step_moves_by_learning_rate():
    # bias correction turns the first step into lr * g / |g|
    s = store_with([0.5], [1.0])
    state = OptimizerState(weight_decay=0.0, clip_norm=None)
    adamw_step(s, state, lr=0.1)
    assert s["p"].data[0] == pytest.approx(0.5 - 0.1 * 1.0 / (1.0 + 1e-8), abs=1e-12)
    assert state.step == 1


def test_decoupled_weight_decay():
    s = store_with([2.0], [0.0])
    adamw_step(s, OptimizerState(weight_decay=0.01, clip_norm=None), lr=0.1)
    assert s["p"].data[0] == pytest.approx(2.0 * (1 - 0.1 * 0.01))


def test_clip_scales_gradient():
    s = store_with([0.0, 0.0], [6.0, 8.0])
    before = clip_grad_norm(s, 0.1)
    assert before == pytest.approx(10.0)
    np.testing.assert_allclose(s["p"].grad, [0.06, 0.08])


@given(st.integers(0, 10**6), st.floats(1e-3, 10.0))
def test_clip_never_increases_norm(seed, max_norm):
    s = store_with(np.zeros(5), Rng(seed).normal(5))
    before = global_grad_norm(s)
    grad = s["p"].grad.copy()
    clip_grad_norm(s, max_norm)
    after = global_grad_norm(s)
    assert after <= before + 1e-12
    if before <= max_norm:
        np.testing.assert_array_equal(s["p"].grad, grad)
    else:
        assert after == pytest.approx(max_norm)


def test_missing_gradient_names_parameter():
    s = ParameterStore()
    s.add("encoder.weight", np.zeros(2))
    with pytest.raises(ValueError, match="encoder.weight"):
        adamw_step(s, OptimizerState(), lr=0.1)


def test_learning_rate_must_be_positive():
    with pytest.raises(ValueError):
        adamw_step(store_with([1.0], [1.0]), OptimizerState(), lr=0.0)


def test_moments_match_parameter_shapes():
    s = store_with(np.zeros((2, 3)), np.ones((2, 3)))
    state = OptimizerState()
    adamw_step(s, state, lr=0.01)
    assert state.exp_avg["p"].shape == (2, 3) and state.exp_avg_sq["p"].shape == (2, 3)


def test_schedule_endpoints():
    assert lr_schedule(0, 100, 10, 5e-4) == 0.0
    assert lr_schedule(10, 100, 10, 5e-4) == 5e-4
    assert lr_schedule(100, 100, 10, 5e-4) == pytest.approx(0.0, abs=1e-20)
    assert lr_schedule(55, 100, 10, 5e-4) == pytest.approx(2.5e-4)
    assert lr_schedule(5, 100, 10, 5e-4) == pytest.approx(2.5e-4)


def test_schedule_clamps_step():
    assert lr_schedule(-5, 100, 10, 1.0) == 0.0
    assert lr_schedule(500, 100, 10, 1.0) == lr_schedule(100, 100, 10, 1.0)


@given(st.integers(1, 500), st.data())
def test_schedule_shape(total, data):
    warmup = data.draw(st.integers(0, total - 1))
    values = [lr_schedule(t, total, warmup, 1.0) for t in range(total + 1)]
    assert all(0.0 <= v <= 1.0 + 1e-15 for v in values)
    tail = values[warmup:]
    assert all(a >= b - 1e-15 for a, b in zip(tail, tail[1:]))
    assert math.isclose(values[-1], 0.0, abs_tol=1e-15)
