"""@njit loop implementation of the convolution primitives.

Same contracts as numpy_backend. Accumulation order per output element is
fixed (c, p, q ascending), so results are deterministic; prange only
distributes disjoint output slices across threads.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def conv2d_forward(x, w, stride, pad):
    n, cin, h, wid = x.shape
    cout, _, kh, kw = w.shape
    hout = (h + 2 * pad - kh) // stride + 1
    wout = (wid + 2 * pad - kw) // stride + 1
    y = np.zeros((n, cout, hout, wout), dtype=x.dtype)
    for o in prange(cout):
        for b in range(n):
            for c in range(cin):
                for p in range(kh):
                    for q in range(kw):
                        wv = w[o, c, p, q]
                        if wv == 0.0:
                            continue
                        for i in range(hout):
                            hs = i * stride - pad + p
                            if hs < 0 or hs >= h:
                                continue
                            xrow = x[b, c, hs]
                            yrow = y[b, o, i]
                            for j in range(wout):
                                ws = j * stride - pad + q
                                if 0 <= ws < wid:
                                    yrow[j] += wv * xrow[ws]
    return y


@njit(cache=True, parallel=True)
def conv2d_input_grad(gy, w, stride, pad, h, wid):
    n, cout, hout, wout = gy.shape
    _, cin, kh, kw = w.shape
    gx = np.zeros((n, cin, h, wid), dtype=gy.dtype)
    for c in prange(cin):
        for b in range(n):
            for o in range(cout):
                for p in range(kh):
                    for q in range(kw):
                        wv = w[o, c, p, q]
                        if wv == 0.0:
                            continue
                        for i in range(hout):
                            hs = i * stride - pad + p
                            if hs < 0 or hs >= h:
                                continue
                            grow = gy[b, o, i]
                            xrow = gx[b, c, hs]
                            for j in range(wout):
                                ws = j * stride - pad + q
                                if 0 <= ws < wid:
                                    xrow[ws] += wv * grow[j]
    return gx


@njit(cache=True, parallel=True)
def conv2d_weight_grad(x, gy, stride, pad, kh, kw):
    n, cin, h, wid = x.shape
    _, cout, hout, wout = gy.shape
    gw = np.zeros((cout, cin, kh, kw), dtype=x.dtype)
    for o in prange(cout):
        for c in range(cin):
            for p in range(kh):
                for q in range(kw):
                    acc = gw[o, c, p, q]
                    for b in range(n):
                        for i in range(hout):
                            hs = i * stride - pad + p
                            if hs < 0 or hs >= h:
                                continue
                            grow = gy[b, o, i]
                            xrow = x[b, c, hs]
                            for j in range(wout):
                                ws = j * stride - pad + q
                                if 0 <= ws < wid:
                                    acc += grow[j] * xrow[ws]
                    gw[o, c, p, q] = acc
    return gw
