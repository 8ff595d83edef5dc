"""Backend agreement: the numba kernels must match the numpy/BLAS path."""

import os
import subprocess
import sys

import numpy as np
import pytest

from msgunet.kernels import active_backend, numba_backend, numpy_backend

CASES = [
    # n, cin, h, w, cout, k, stride, pad
    (2, 3, 8, 8, 4, 4, 2, 1),
    (1, 6, 16, 16, 8, 4, 2, 1),
    (2, 4, 7, 7, 3, 3, 1, 1),
    (1, 5, 6, 6, 2, 1, 1, 0),
    (1, 2, 9, 9, 4, 4, 1, 2),
]


@pytest.mark.parametrize("case", CASES)
def test_forward_agrees(case, rng):
    n, cin, h, w, cout, k, s, p = case
    x = rng.standard_normal((n, cin, h, w))
    wt = rng.standard_normal((cout, cin, k, k))
    a = numpy_backend.conv2d_forward(x, wt, s, p)
    b = numba_backend.conv2d_forward(x, wt, s, p)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("case", CASES)
def test_input_grad_agrees(case, rng):
    n, cin, h, w, cout, k, s, p = case
    wt = rng.standard_normal((cout, cin, k, k))
    ho = (h + 2 * p - k) // s + 1
    wo = (w + 2 * p - k) // s + 1
    gy = rng.standard_normal((n, cout, ho, wo))
    a = numpy_backend.conv2d_input_grad(gy, wt, s, p, h, w)
    b = numba_backend.conv2d_input_grad(gy, wt, s, p, h, w)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("case", CASES)
def test_weight_grad_agrees(case, rng):
    n, cin, h, w, cout, k, s, p = case
    x = rng.standard_normal((n, cin, h, w))
    ho = (h + 2 * p - k) // s + 1
    wo = (w + 2 * p - k) // s + 1
    gy = rng.standard_normal((n, cout, ho, wo))
    a = numpy_backend.conv2d_weight_grad(x, gy, s, p, k, k)
    b = numba_backend.conv2d_weight_grad(x, gy, s, p, k, k)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_float32_paths_agree(rng):
    x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
    wt = rng.standard_normal((4, 3, 4, 4)).astype(np.float32)
    a = numpy_backend.conv2d_forward(x, wt, 2, 1)
    b = numba_backend.conv2d_forward(x, wt, 2, 1)
    assert a.dtype == b.dtype == np.float32
    np.testing.assert_allclose(a, b, rtol=2e-4, atol=2e-5)


def test_default_backend_is_numpy():
    assert active_backend() == "numpy"


def test_env_flag_selects_numba():
    code = ("import msgunet.kernels as k; print(k.active_backend())")
    env = dict(os.environ, MSGU_BACKEND="numba")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"


def test_env_flag_rejects_unknown():
    code = "import msgunet.kernels"
    env = dict(os.environ, MSGU_BACKEND="cuda")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.returncode != 0
    assert "MSGU_BACKEND" in out.stderr
