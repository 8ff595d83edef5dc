"""Convolution kernels with a selectable backend.

The hot inner loops of the whole package are the three convolution
primitives below (forward, gradient w.r.t. input, gradient w.r.t. weight);
transposed convolution is expressed through the same three. Two
implementations exist:

* ``numpy``  — im2col + BLAS matmul. Default: on machines with a decent
  BLAS this is by far the fastest path (see benchmarks/bench_kernels.py).
* ``numba``  — @njit direct loops, no im2col buffer. Selectable for
  environments where BLAS is slow or memory is tight.

Set ``MSGU_BACKEND=numba`` or ``MSGU_BACKEND=numpy`` to pick one at import
time. Both are deterministic run-to-run; they are not bitwise identical to
each other because summation order differs.
"""

import os

from ..errors import ConfigError
from . import numpy_backend

_requested = os.environ.get("MSGU_BACKEND", "").strip().lower()

if _requested in ("", "numpy"):
    _impl = numpy_backend
    BACKEND = "numpy"
elif _requested == "numba":
    from . import numba_backend

    _impl = numba_backend
    BACKEND = "numba"
else:
    raise ConfigError(
        f"MSGU_BACKEND={_requested!r} not recognized; use 'numpy' or 'numba'"
    )

conv2d_forward = _impl.conv2d_forward
conv2d_input_grad = _impl.conv2d_input_grad
conv2d_weight_grad = _impl.conv2d_weight_grad


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return BACKEND
