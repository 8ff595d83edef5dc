"""Gradient-magnitude diagnostic: train twin runs (with and without the
intermediate output heads) from one seed, then histogram |grad| per
parameter group after the final epoch.

Both CSVs share the same 64 log-spaced bins spanning 1e-12 .. 1e4;
magnitudes below 1e-12 (including exact zeros) fold into the lowest bin
and anything above 1e4 into the highest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import data as D
from . import losses as L
from . import tensor as T
from .config import RunConfig
from .nets import ArchitectureConfig
from .train import (PyramidCache, TrainState, _batch_pyramids, build_state,
                    discriminator_objective, generator_objective, head_entries)

BIN_EDGES = np.logspace(-12.0, 4.0, 65)
NEAR_ZERO = 1e-8  # == BIN_EDGES[16]


def param_group(name: str) -> str:
    top = name.split(".", 1)[0]
    if ".head." in name:
        return "head" + top[3:]
    return top


def _hist(values: np.ndarray) -> np.ndarray:
    counts, _ = np.histogram(np.clip(values, BIN_EDGES[0], BIN_EDGES[-1]), bins=BIN_EDGES)
    return counts


@dataclass
class ScanResult:
    groups: dict[str, np.ndarray]        # group -> 64 bin counts
    medians: dict[str, float]
    near_zero_frac: dict[str, float]
    csv_path: str


def _run_variant(cfg: RunConfig, heads_on: bool, epochs: int) -> tuple[TrainState, dict]:
    arch = replace(cfg.architecture, intermediate_heads=heads_on)
    manifest = D.load_dataset(cfg.data_root, cfg.split)
    steps = epochs * math.ceil(len(manifest) / cfg.batch_size)
    cfg_v = replace(cfg, architecture=arch, steps=steps)

    state = build_state(cfg_v)
    cache = PyramidCache(manifest, arch.scale_chain, cfg_v.dtype)
    chain = arch.scale_chain
    weights = L.LossWeights(alpha=cfg_v.alpha, beta=cfg_v.beta)

    for step in range(steps):
        x_pyr, y_pyr = _batch_pyramids(cache, cfg_v, step, len(manifest))
        x_heads = head_entries(x_pyr, chain, state.head_hw)
        y_heads = head_entries(y_pyr, chain, state.head_hw)
        z_pyr = state.gen.forward(x_pyr, train=True)
        d_total, _ = discriminator_objective(state, x_heads, y_heads, z_pyr)
        T.backward(d_total)
        state.opt_d.step()
        g_total, _ = generator_objective(state, x_heads, y_heads, z_pyr, weights)
        T.backward(g_total)
        state.opt_g.step()
        state.step = step + 1

    # after the final epoch: one full-dataset backward of the generator
    # objective, |grad| pooled per parameter group
    pooled: dict[str, list[np.ndarray]] = {}
    gen_params = state.gen.named_parameters()
    xs, ys = [], []
    for idx in range(len(manifest)):
        x_np, y_np = cache.get(idx)
        xs.append(x_np)
        ys.append(y_np)
    x_pyr = [T.Tensor(np.stack([s[k] for s in xs])) for k in range(len(chain))]
    y_pyr = [T.Tensor(np.stack([s[k] for s in ys])) for k in range(len(chain))]
    x_heads = head_entries(x_pyr, chain, state.head_hw)
    y_heads = head_entries(y_pyr, chain, state.head_hw)
    z_pyr = state.gen.forward(x_pyr, train=True)
    g_total, _ = generator_objective(state, x_heads, y_heads, z_pyr, weights)
    T.backward(g_total)
    for name, p in gen_params.items():
        if p.grad is None:
            continue
        pooled.setdefault(param_group(name), []).append(
            np.abs(p.grad).ravel().astype(np.float64))
    groups = {g: np.concatenate(vs) for g, vs in pooled.items()}
    return state, groups


def _write_csv(path, groups: dict[str, np.ndarray]):
    lines = ["group,bin_lo,bin_hi,count"]
    for g in sorted(groups):
        counts = _hist(groups[g])
        for b in range(64):
            lines.append(f"{g},{BIN_EDGES[b]:.6e},{BIN_EDGES[b + 1]:.6e},{counts[b]}")
    Path(path).write_text("\n".join(lines) + "\n")


def gradscan(cfg: RunConfig, epochs: int = 20, out_dir=None) -> dict[str, ScanResult]:
    """Run both variants; write one histogram CSV per variant."""
    out = Path(out_dir if out_dir is not None else (cfg.out_dir or "."))
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for label, heads_on in (("heads_on", True), ("heads_off", False)):
        _, groups = _run_variant(cfg, heads_on, epochs)
        csv_path = out / f"gradscan_{label}.csv"
        _write_csv(csv_path, groups)
        results[label] = ScanResult(
            groups={g: _hist(v) for g, v in groups.items()},
            medians={g: float(np.median(v)) for g, v in groups.items()},
            near_zero_frac={g: float((v < NEAR_ZERO).mean()) for g, v in groups.items()},
            csv_path=str(csv_path),
        )
    return results
