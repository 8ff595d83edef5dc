"""Bilinear / nearest resampling shared by the tensor op and the data path.

Sample centers follow the half-pixel convention: source coordinate of
output index i is (i + 0.5) * (in / out) - 0.5, clamped to the valid range
(align-corners = false). Both the differentiable resize op and the image
pyramid code call into this module so the two paths agree bitwise.
"""

import numpy as np


def bilinear_axis_weights(n_in: int, n_out: int):
    """Index pairs and weights for 1-D bilinear resampling along one axis.

    Returns (i0, i1, w0, w1) with out[k] = w0[k]*in[i0[k]] + w1[k]*in[i1[k]].
    """
    scale = n_in / n_out
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    i0 = np.floor(src).astype(np.int64)
    frac = src - i0
    i0c = np.clip(i0, 0, n_in - 1)
    i1c = np.clip(i0 + 1, 0, n_in - 1)
    return i0c, i1c, 1.0 - frac, frac


def bilinear_resize(x: np.ndarray, th: int, tw: int) -> np.ndarray:
    """Bilinear resample of the trailing two axes of x (any leading shape)."""
    h, w = x.shape[-2], x.shape[-1]
    if (h, w) == (th, tw):
        return x.copy()
    r0, r1, u0, u1 = bilinear_axis_weights(h, th)
    c0, c1, v0, v1 = bilinear_axis_weights(w, tw)
    u0 = u0.astype(x.dtype)[:, None]
    u1 = u1.astype(x.dtype)[:, None]
    v0 = v0.astype(x.dtype)[None, :]
    v1 = v1.astype(x.dtype)[None, :]
    top = u0 * (v0 * x[..., r0[:, None], c0[None, :]] + v1 * x[..., r0[:, None], c1[None, :]])
    bot = u1 * (v0 * x[..., r1[:, None], c0[None, :]] + v1 * x[..., r1[:, None], c1[None, :]])
    return top + bot


def bilinear_resize_grad(gy: np.ndarray, h: int, w: int) -> np.ndarray:
    """Adjoint of bilinear_resize: scatter gy back onto an (h, w) grid."""
    th, tw = gy.shape[-2], gy.shape[-1]
    if (h, w) == (th, tw):
        return gy.copy()
    r0, r1, u0, u1 = bilinear_axis_weights(h, th)
    c0, c1, v0, v1 = bilinear_axis_weights(w, tw)
    gx = np.zeros(gy.shape[:-2] + (h, w), dtype=gy.dtype)
    u0 = u0.astype(gy.dtype)[:, None]
    u1 = u1.astype(gy.dtype)[:, None]
    v0 = v0.astype(gy.dtype)[None, :]
    v1 = v1.astype(gy.dtype)[None, :]
    rr0 = r0[:, None]
    rr1 = r1[:, None]
    cc0 = c0[None, :]
    cc1 = c1[None, :]
    np.add.at(gx, (..., rr0, cc0), u0 * v0 * gy)
    np.add.at(gx, (..., rr0, cc1), u0 * v1 * gy)
    np.add.at(gx, (..., rr1, cc0), u1 * v0 * gy)
    np.add.at(gx, (..., rr1, cc1), u1 * v1 * gy)
    return gx


def nearest_resize(x: np.ndarray, th: int, tw: int) -> np.ndarray:
    h, w = x.shape[-2], x.shape[-1]
    if (h, w) == (th, tw):
        return x.copy()
    ri = np.clip(np.floor((np.arange(th) + 0.5) * (h / th)).astype(np.int64), 0, h - 1)
    ci = np.clip(np.floor((np.arange(tw) + 0.5) * (w / tw)).astype(np.int64), 0, w - 1)
    return np.ascontiguousarray(x[..., ri[:, None], ci[None, :]])
