"""Test-side oracles, independent of the engine's backward pass."""

import numpy as np


def central_diff_grad(forward, arr: np.ndarray, coords, eps: float = 1e-5):
    """Central finite differences of a scalar-valued forward at given coords.

    `forward` re-executes the computation from scratch and returns a float;
    `arr` is mutated in place for the probe and restored afterwards.
    """
    grads = {}
    flat = arr.reshape(-1)
    for c in coords:
        orig = flat[c]
        flat[c] = orig + eps
        hi = forward()
        flat[c] = orig - eps
        lo = forward()
        flat[c] = orig
        grads[c] = (hi - lo) / (2.0 * eps)
    return grads


def sample_coords(rng, size: int, k: int):
    k = min(k, size)
    return [int(i) for i in rng.choice(size, size=k, replace=False)]


def assert_grad_close(analytic: np.ndarray, forward, arr: np.ndarray, coords,
                      eps: float = 1e-5, rtol: float = 1e-3, atol: float = 1e-7):
    """Compare analytic grad coordinates against central differences."""
    numeric = central_diff_grad(forward, arr, coords, eps)
    flat = analytic.reshape(-1)
    for c in coords:
        a, n = float(flat[c]), numeric[c]
        err = abs(a - n)
        bound = atol + rtol * max(abs(a), abs(n))
        assert err <= bound, (
            f"coord {c}: analytic {a!r} vs numeric {n!r} (err {err:.3e} > {bound:.3e})"
        )


def bilinear_reference(img: np.ndarray, th: int, tw: int) -> np.ndarray:
    """Direct per-pixel evaluation of half-pixel-center bilinear resampling.

    Intentionally scalar and loop-based; the production path must agree.
    """
    c, h, w = img.shape
    out = np.zeros((c, th, tw), dtype=np.float64)
    for ch in range(c):
        for i in range(th):
            for j in range(tw):
                sy = (i + 0.5) * (h / th) - 0.5
                sx = (j + 0.5) * (w / tw) - 0.5
                y0 = int(np.floor(sy))
                x0 = int(np.floor(sx))
                fy = sy - y0
                fx = sx - x0
                y0c = min(max(y0, 0), h - 1)
                y1c = min(max(y0 + 1, 0), h - 1)
                x0c = min(max(x0, 0), w - 1)
                x1c = min(max(x0 + 1, 0), w - 1)
                out[ch, i, j] = (
                    (1 - fy) * (1 - fx) * img[ch, y0c, x0c]
                    + (1 - fy) * fx * img[ch, y0c, x1c]
                    + fy * (1 - fx) * img[ch, y1c, x0c]
                    + fy * fx * img[ch, y1c, x1c]
                )
    return out
