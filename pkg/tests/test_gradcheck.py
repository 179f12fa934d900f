import numpy as np
import pytest

from plainpoint import tensor as T
from plainpoint.gradcheck import NondeterministicFunctionError, grad_check, grad_check_report, relative_error
from plainpoint.gradsuite import PRIMITIVES, TOLERANCE, encoder_case, run_case, segmentation_case
from plainpoint.nn import ParameterStore
from plainpoint.rng import Rng


def square_store(value):
    s = ParameterStore()
    s.add("p", np.array([value]))
    return s


def test_smooth_polynomial():
    s = square_store(3.0)
    assert grad_check(lambda st: T.sum_(st["p"] * st["p"]), s, eps=1e-5) < 1e-8


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-12, 0.0) == pytest.approx(1e-4)


def test_relu_kink_is_excluded():
    s = square_store(0.0)
    r = grad_check_report(lambda st: T.sum_(T.relu(st["p"])), s, eps=1e-6)
    assert r.excluded == [("p", (0,))] and r.checked == 0


def test_nondeterministic_function_detected():
    s = square_store(1.0)
    calls = iter(range(100))
    with pytest.raises(NondeterministicFunctionError):
        grad_check(lambda st: T.sum_(st["p"] * float(next(calls))), s)


def test_wrong_gradient_is_caught():
    s = square_store(2.0)

    def bad(st):
        # forward is x**2 but backward claims 3x
        p = st["p"]
        return T._result((p.data ** 2).sum(), (p,), lambda g: (3 * p.data * g,), "bad")

    assert grad_check(bad, s, eps=1e-6) > 0.1


def test_fourth_order_stencil_on_cubic():
    s = square_store(0.7)
    f = lambda st: T.sum_(T.power(st["p"], 5.0))
    assert grad_check(f, s, eps=1e-3, order=4) < grad_check(f, s, eps=1e-3, order=2)


def test_order_validated():
    with pytest.raises(ValueError):
        grad_check(lambda st: T.sum_(st["p"]), square_store(1.0), order=3)


def test_parameters_restored_after_check():
    s = square_store(1.25)
    grad_check(lambda st: T.sum_(st["p"] * st["p"]), s)
    assert s["p"].data[0] == 1.25


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_single_seed(name):
    assert run_case(PRIMITIVES[name], seed=101).max_rel_error < TOLERANCE


def test_encoder_gradients():
    r = run_case(encoder_case, seed=5, max_coords=4)
    assert r.checked > 0 and r.max_rel_error < TOLERANCE


def test_segmentation_head_gradients():
    r = run_case(segmentation_case, seed=5, max_coords=4)
    assert r.checked > 0 and r.max_rel_error < TOLERANCE
