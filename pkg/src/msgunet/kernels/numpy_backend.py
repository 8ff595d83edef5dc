"""im2col + BLAS implementation of the convolution primitives.

All three functions treat convolution as cross-correlation (no kernel
flip). Shapes follow the NCHW / OIHW convention. The input gradient is
computed as a stride-1 correlation of the (zero-stuffed) upstream gradient
with the flipped kernel, which turns the scatter into a single GEMM.
"""

import numpy as np


def _pad2d(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _im2col(xp, kh, kw, stride, hout, wout):
    # xp is already padded; result axis order (N, C, kh, kw, hout, wout)
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, hout, wout), dtype=xp.dtype)
    for i in range(kh):
        hi = i + stride * (hout - 1) + 1
        for j in range(kw):
            wj = j + stride * (wout - 1) + 1
            cols[:, :, i, j] = xp[:, :, i:hi:stride, j:wj:stride]
    return cols


def conv2d_forward(x, w, stride, pad):
    """y[n,o,i,j] = sum_{c,p,q} x[n,c,i*s-pad+p, j*s-pad+q] * w[o,c,p,q]."""
    n, cin, h, wid = x.shape
    cout, _, kh, kw = w.shape
    hout = (h + 2 * pad - kh) // stride + 1
    wout = (wid + 2 * pad - kw) // stride + 1
    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        y = np.matmul(w.reshape(cout, cin), x.reshape(n, cin, h * wid))
        return np.ascontiguousarray(y.reshape(n, cout, h, wid))
    cols = _im2col(_pad2d(x, pad), kh, kw, stride, hout, wout)
    cols = cols.reshape(n, cin * kh * kw, hout * wout)
    y = np.matmul(w.reshape(cout, -1), cols)
    return np.ascontiguousarray(y.reshape(n, cout, hout, wout))


def conv2d_input_grad(gy, w, stride, pad, h, wid):
    """Gradient of conv2d_forward w.r.t. its input, given upstream gy."""
    n, cout, hout, wout = gy.shape
    _, cin, kh, kw = w.shape
    ph = kh - 1 - pad
    # stride 1: a single flipped-kernel correlation (one GEMM, no scatter);
    # strided convs fall through to col2im, where stuffing zeros would
    # multiply the GEMM work by stride^2 instead.
    if stride == 1 and ph >= 0 and kw - 1 - pad == ph:
        wf = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        gx = conv2d_forward(gy, wf, 1, ph)
        if gx.shape[2:] != (h, wid):
            raise ValueError(
                f"input-grad shape {gx.shape[2:]} does not recover ({h}, {wid})"
            )
        return gx
    # col2im scatter
    gcols = np.matmul(w.reshape(cout, -1).T, gy.reshape(n, cout, hout * wout))
    gcols = gcols.reshape(n, cin, kh, kw, hout, wout)
    gxp = np.zeros((n, cin, h + 2 * pad, wid + 2 * pad), dtype=gy.dtype)
    for i in range(kh):
        hi = i + stride * (hout - 1) + 1
        for j in range(kw):
            wj = j + stride * (wout - 1) + 1
            gxp[:, :, i:hi:stride, j:wj:stride] += gcols[:, :, i, j]
    if pad == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, :, pad:pad + h, pad:pad + wid])


def conv2d_weight_grad(x, gy, stride, pad, kh, kw):
    """Gradient of conv2d_forward w.r.t. its weight, given upstream gy."""
    n, cin, h, wid = x.shape
    _, cout, hout, wout = gy.shape
    gyf = gy.reshape(n, cout, hout * wout)
    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        gw = np.tensordot(gyf, x.reshape(n, cin, h * wid), axes=([0, 2], [0, 2]))
        return np.ascontiguousarray(gw.reshape(cout, cin, 1, 1))
    cols = _im2col(_pad2d(x, pad), kh, kw, stride, hout, wout)
    cols = cols.reshape(n, cin * kh * kw, hout * wout)
    gw = np.tensordot(gyf, cols, axes=([0, 2], [0, 2]))
    return np.ascontiguousarray(gw.reshape(cout, cin, kh, kw))
