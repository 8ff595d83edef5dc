import numpy as np
import pytest

from msgunet.errors import OptimizerError
from msgunet.optim import Adam
from msgunet.tensor import Tensor


def test_zero_grad_leaves_params_unchanged():
    p = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True, dtype=np.float64)
    opt = Adam({"p": p}, lr=0.1)
    p.grad = np.zeros_like(p.data)
    before = p.data.copy()
    opt.step()
    np.testing.assert_array_equal(p.data, before)


def test_none_grad_is_skipped():
    p = Tensor(np.array([1.0]), requires_grad=True, dtype=np.float64)
    opt = Adam({"p": p}, lr=0.1)
    opt.step()
    assert p.data[0] == 1.0 and opt.t == 1


def test_first_step_is_unit_normalized():
    # hand evaluation at t=1: m_hat = g, v_hat = g^2, step = -lr/(1 + eps)
    p = Tensor(np.array([0.0]), requires_grad=True, dtype=np.float64)
    opt = Adam({"p": p}, lr=0.1)
    p.grad = np.array([1.0])
    opt.step()
    expected = -0.1 / (1.0 + 1e-8)
    assert abs(p.data[0] - expected) < 1e-15
    assert abs(p.data[0] + 0.1) < 1e-8


def test_quadratic_bowl_converges():
    p = Tensor(np.array([5.0]), requires_grad=True, dtype=np.float64)
    opt = Adam({"p": p}, lr=0.1)
    for _ in range(500):
        p.grad = 2.0 * (p.data - 3.0)
        opt.step()
        if abs(p.data[0] - 3.0) < 1e-4:
            break
    assert abs(p.data[0] - 3.0) < 1e-4


def test_nan_grad_names_parameter():
    p = Tensor(np.array([0.0]), requires_grad=True, dtype=np.float64)
    opt = Adam({"late.bias": p}, lr=0.1)
    p.grad = np.array([np.nan])
    with pytest.raises(OptimizerError, match="late.bias"):
        opt.step()


def test_bad_lr_rejected():
    with pytest.raises(OptimizerError):
        Adam({}, lr=0.0)


def test_state_roundtrip():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True, dtype=np.float64)
    opt = Adam({"p": p}, lr=0.01)
    for _ in range(3):
        p.grad = np.array([0.5, -0.5])
        opt.step()
    arrays = {k: v.copy() for k, v in opt.state_arrays().items()}

    p2 = Tensor(np.array([1.0, 2.0]), requires_grad=True, dtype=np.float64)
    opt2 = Adam({"p": p2}, lr=0.01)
    opt2.load_state_arrays(arrays)
    assert opt2.t == opt.t
    np.testing.assert_array_equal(opt2.m["p"], opt.m["p"])
    np.testing.assert_array_equal(opt2.v["p"], opt.v["p"])
