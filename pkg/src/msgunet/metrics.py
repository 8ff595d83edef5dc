"""Full-reference image quality metrics: PSNR, SSIM, and pixel-domain VIF.

All metrics operate on 8-bit-range values (floats in [0, 255]); color
inputs are reduced to luma (0.299 R + 0.587 G + 0.114 B) for SSIM and VIF,
while PSNR uses the full array. These kernels are plain array code with no
dependence on the autodiff engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeError

PSNR_CAP_DB = 100.0
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = (0.01 * 255.0) ** 2
_SSIM_C2 = (0.03 * 255.0) ** 2
_VIF_LEVELS = 4
_VIF_SIGMA_NSQ = 2.0
_VIF_EPS = 1e-10

_LUMA = np.array([0.299, 0.587, 0.114])


def _as_float(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[0] in (1, 3):
        return arr
    raise ShapeError(f"metric input must be (H,W) or (C,H,W) with C in {{1,3}}: {arr.shape}")


def to_luma(img) -> np.ndarray:
    arr = _as_float(img)
    if arr.ndim == 2:
        return arr
    if arr.shape[0] == 1:
        return arr[0]
    return np.tensordot(_LUMA, arr, axes=(0, 0))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a 1-D kernel on both axes."""
    k = kernel.size
    h, w = img.shape
    tmp = np.zeros((h - k + 1, w), dtype=np.float64)
    for i in range(k):
        tmp += kernel[i] * img[i:i + h - k + 1]
    out = np.zeros((h - k + 1, w - k + 1), dtype=np.float64)
    for j in range(k):
        out += kernel[j] * tmp[:, j:j + w - k + 1]
    return out


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def psnr(reference, candidate, peak: float = 255.0) -> float:
    """10 * log10(peak^2 / MSE); identical inputs give +inf."""
    ref = _as_float(reference)
    cand = _as_float(candidate)
    if ref.shape != cand.shape:
        raise ShapeError(f"psnr shape mismatch: {ref.shape} vs {cand.shape}")
    mse = np.mean((ref - cand) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(reference, candidate) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), on luma."""
    ref = to_luma(reference)
    cand = to_luma(candidate)
    if ref.shape != cand.shape:
        raise ShapeError(f"ssim shape mismatch: {ref.shape} vs {cand.shape}")
    if min(ref.shape) < _SSIM_WINDOW:
        raise ShapeError(
            f"ssim needs images at least {_SSIM_WINDOW}x{_SSIM_WINDOW}, got {ref.shape}"
        )
    win = _gaussian_kernel(_SSIM_WINDOW, _SSIM_SIGMA)
    mu1 = _filter_valid(ref, win)
    mu2 = _filter_valid(cand, win)
    s11 = _filter_valid(ref * ref, win) - mu1 * mu1
    s22 = _filter_valid(cand * cand, win) - mu2 * mu2
    s12 = _filter_valid(ref * cand, win) - mu1 * mu2
    num = (2.0 * mu1 * mu2 + _SSIM_C1) * (2.0 * s12 + _SSIM_C2)
    den = (mu1 * mu1 + mu2 * mu2 + _SSIM_C1) * (s11 + s22 + _SSIM_C2)
    return float(np.mean(num / den))


def vif_p(reference, candidate, return_levels: bool = False):
    """Pixel-domain visual information fidelity over a 4-level pyramid.

    Each level filters with a Gaussian window (size 2^(5-s)+1, sd size/5),
    downsamples by 2 from the second level on, and accumulates the two
    log-information sums; the result is their ratio. Variances are floored
    at 1e-10 and the additive noise variance is 2.0. Images too small for
    4 levels are scored over the feasible levels, whose count is reported
    when return_levels is set.
    """
    ref = to_luma(reference)
    cand = to_luma(candidate)
    if ref.shape != cand.shape:
        raise ShapeError(f"vif_p shape mismatch: {ref.shape} vs {cand.shape}")
    num = 0.0
    den = 0.0
    levels = 0
    for scale in range(1, _VIF_LEVELS + 1):
        n = 2 ** (_VIF_LEVELS - scale + 1) + 1
        win = _gaussian_kernel(n, n / 5.0)
        if scale > 1:
            if min(ref.shape) < n:
                break
            ref = _filter_valid(ref, win)[::2, ::2]
            cand = _filter_valid(cand, win)[::2, ::2]
        if min(ref.shape) < n:
            break
        mu1 = _filter_valid(ref, win)
        mu2 = _filter_valid(cand, win)
        s11 = np.maximum(_filter_valid(ref * ref, win) - mu1 * mu1, 0.0)
        s22 = np.maximum(_filter_valid(cand * cand, win) - mu2 * mu2, 0.0)
        s12 = _filter_valid(ref * cand, win) - mu1 * mu2

        g = s12 / (s11 + _VIF_EPS)
        sv = s22 - g * s12
        g = np.where(s11 < _VIF_EPS, 0.0, g)
        sv = np.where(s11 < _VIF_EPS, s22, sv)
        s11c = np.where(s11 < _VIF_EPS, 0.0, s11)
        sv = np.where(s22 < _VIF_EPS, 0.0, sv)
        g = np.where(s22 < _VIF_EPS, 0.0, g)
        sv = np.where(g < 0.0, s22, sv)
        g = np.maximum(g, 0.0)
        sv = np.maximum(sv, _VIF_EPS)

        num += float(np.sum(np.log10(1.0 + g * g * s11c / (sv + _VIF_SIGMA_NSQ))))
        den += float(np.sum(np.log10(1.0 + s11c / _VIF_SIGMA_NSQ)))
        levels = scale
    if levels == 0:
        raise ShapeError(f"vif_p: image {ref.shape} too small for even one level")
    value = num / den if den != 0.0 else 1.0
    if return_levels:
        return value, levels
    return value


# ---------------------------------------------------------------------------
# dataset evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricReport:
    ids: tuple[str, ...]
    psnr_db: tuple[float, ...]
    ssim: tuple[float, ...]
    vif: tuple[float, ...]

    @property
    def mean_psnr(self) -> float:
        return sum(min(v, PSNR_CAP_DB) for v in self.psnr_db) / len(self.psnr_db)

    @property
    def mean_ssim(self) -> float:
        return sum(self.ssim) / len(self.ssim)

    @property
    def mean_vif(self) -> float:
        return sum(self.vif) / len(self.vif)

    def to_csv(self) -> str:
        lines = ["id,psnr_db,ssim,vif"]
        for i, name in enumerate(self.ids):
            p = min(self.psnr_db[i], PSNR_CAP_DB)
            lines.append(f"{name},{p:.6f},{self.ssim[i]:.6f},{self.vif[i]:.6f}")
        lines.append(f"mean,{self.mean_psnr:.6f},{self.mean_ssim:.6f},{self.mean_vif:.6f}")
        return "\n".join(lines) + "\n"


def evaluate_dataset(outputs_dir, targets_dir, csv_path=None) -> MetricReport:
    """Per-image PSNR/SSIM/VIF over matching filenames, plus the mean row."""
    from .data import read_image

    out_dir = Path(outputs_dir)
    tgt_dir = Path(targets_dir)
    exts = (".ppm", ".png")
    outs = {p.name: p for p in out_dir.iterdir()
            if p.is_file() and p.suffix.lower() in exts}
    tgts = {p.name: p for p in tgt_dir.iterdir()
            if p.is_file() and p.suffix.lower() in exts}
    common = sorted(outs.keys() & tgts.keys())
    if not common:
        raise DataError(f"no matching filenames between {out_dir} and {tgt_dir}")
    for name in sorted(outs.keys() - tgts.keys()):
        raise DataError(f"output {name} has no counterpart in {tgt_dir}")
    for name in sorted(tgts.keys() - outs.keys()):
        raise DataError(f"target {name} has no counterpart in {out_dir}")

    ids, ps, ss, vs = [], [], [], []
    for name in common:
        out_img = read_image(outs[name]).astype(np.float64)
        tgt_img = read_image(tgts[name]).astype(np.float64)
        ids.append(name)
        ps.append(psnr(tgt_img, out_img))
        ss.append(ssim(tgt_img, out_img))
        vs.append(vif_p(tgt_img, out_img))
    report = MetricReport(ids=tuple(ids), psnr_db=tuple(ps), ssim=tuple(ss), vif=tuple(vs))
    if csv_path is not None:
        Path(csv_path).write_text(report.to_csv())
    return report
