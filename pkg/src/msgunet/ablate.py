"""Input-degradation sweep: SSIM grid over input x output resolutions."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import data as D
from .errors import DataError
from .metrics import ssim
from .tensor import Tensor
from .train import load_generator


def ablate(ckpt_path, data_root, split: str = "val", levels=None,
           csv_path=None):
    """Mean SSIM per (degrade level, output scale) over a paired dataset.

    Rows are input (degradation) resolutions coarsest-first; columns are
    the generator's output scales. Returns (levels, head_scales, grid).
    """
    cfg, gen = load_generator(ckpt_path)
    chain = cfg.architecture.scale_chain
    head_hw = gen.plan.head_hw
    if levels is None:
        levels = list(chain)
    levels = [tuple(l) for l in levels]
    for lv in levels:
        if lv not in chain:
            raise DataError(f"degrade level {lv} not in scale chain {chain}")

    manifest = D.load_dataset(data_root, split)
    target_pyrs = []
    sources = []
    for i in range(len(manifest)):
        pair = D.read_pair(manifest, i, cfg.dtype)
        sources.append(pair.source)
        target_pyrs.append(D.make_pyramid(pair.target, chain))
    chain_index = {tuple(hw): i for i, hw in enumerate(chain)}

    grid = np.zeros((len(levels), len(head_hw)))
    for r, lv in enumerate(levels):
        for src, y_pyr in zip(sources, target_pyrs):
            x_pyr = D.ablation_degrade(src, lv, chain)
            outputs = gen.forward([Tensor(e[None]) for e in x_pyr], train=False)
            for c, (z, hw) in enumerate(zip(outputs, head_hw)):
                ref = D.denormalize(y_pyr[chain_index[tuple(hw)]]).astype(np.float64)
                cand = D.denormalize(z.data[0]).astype(np.float64)
                grid[r, c] += ssim(ref, cand)
    grid /= len(manifest)

    if csv_path is not None:
        lines = ["input," + ",".join(f"{h}x{w}" for h, w in head_hw)]
        for r, (h, w) in enumerate(levels):
            lines.append(f"{h}x{w}," + ",".join(f"{v:.6f}" for v in grid[r]))
        Path(csv_path).write_text("\n".join(lines) + "\n")
    return levels, list(head_hw), grid
