"""Eval-mode image generation from a checkpoint."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import data as D
from .errors import DataError
from .tensor import Tensor
from .train import load_generator


def infer(ckpt_path, input_path, out_dir=None, degrade_to=None) -> list[str]:
    """Run the generator on one image or a directory of images.

    Writes one file per output head, suffixed with its HxW scale; returns
    the written paths. `degrade_to` (a scale-chain entry) routes the input
    through the degradation resampler instead of the plain pyramid.
    """
    cfg, gen = load_generator(ckpt_path)
    chain = cfg.architecture.scale_chain
    in_path = Path(input_path)
    if in_path.is_dir():
        images = sorted(p for p in in_path.iterdir()
                        if p.is_file() and p.suffix.lower() in (".ppm", ".png"))
        if not images:
            raise DataError(f"no .ppm/.png images in {in_path}")
    else:
        if not in_path.is_file():
            raise DataError(f"input not found: {in_path}")
        images = [in_path]
    out_base = Path(out_dir) if out_dir is not None else (
        in_path if in_path.is_dir() else in_path.parent)
    out_base.mkdir(parents=True, exist_ok=True)

    written = []
    for img_path in images:
        img = D.normalize(D.read_image(img_path), cfg.dtype)
        if degrade_to is not None:
            pyr = D.ablation_degrade(img, degrade_to, chain)
        else:
            pyr = D.make_pyramid(img, chain)
        outputs = gen.forward([Tensor(e[None]) for e in pyr], train=False)
        for z, (h, w) in zip(outputs, gen.plan.head_hw):
            out_img = D.denormalize(z.data[0])
            name = f"{img_path.stem}_{h}x{w}{img_path.suffix.lower()}"
            target = out_base / name
            D.write_image(target, out_img)
            written.append(str(target))
    return written
