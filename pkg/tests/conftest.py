import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from msgunet.data import denormalize, write_ppm
from msgunet.interp import bilinear_resize
from msgunet.nets import ArchitectureConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_config():
    """Default toy chain from the architecture docs: 32x16 .. 128x64."""
    return ArchitectureConfig(scale_chain=((32, 16), (64, 32), (128, 64)),
                              bottleneck=(8, 4))


@pytest.fixture
def square_config():
    """Small square chain usable with the fixed discriminator topology."""
    return ArchitectureConfig(scale_chain=((16, 16), (32, 32), (64, 64)),
                              bottleneck=(8, 8))


@pytest.fixture
def tiny_config():
    """Two scales, skinny widths; cheap enough for exhaustive grad checks."""
    return ArchitectureConfig(scale_chain=((16, 16), (32, 32)), bottleneck=(4, 4),
                              channel_widths=(2, 3, 4, 5))


def smooth_image(rng, h, w, base=6):
    low = rng.uniform(-0.9, 0.9, (3, base, base))
    return bilinear_resize(low, h, w)


def build_toy_dataset(root: Path, n=4, h=64, w=64, seed=123, split="train"):
    for sub in ("source", "target"):
        (root / split / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        src = smooth_image(rng, h, w)
        tgt = smooth_image(rng, h, w)
        write_ppm(root / split / "source" / f"pair{i}.ppm", denormalize(src))
        write_ppm(root / split / "target" / f"pair{i}.ppm", denormalize(tgt))
    return root


@pytest.fixture
def toy_dataset(tmp_path):
    return build_toy_dataset(tmp_path / "data")
