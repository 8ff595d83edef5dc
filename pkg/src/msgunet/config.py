"""Run configuration: a line-oriented `section.key = value` text format.

Unknown keys fail fast; every key is validated before any work starts.
`MSGU_SEED` in the environment overrides training.seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .nets import ArchitectureConfig


def _parse_size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ConfigError(f"size must look like HxW, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as e:
        raise ConfigError(f"size must be integers HxW, got {text!r}") from e


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"boolean must be true/false, got {text!r}")


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError as e:
        raise ConfigError(f"expected integer, got {text!r}") from e


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError as e:
        raise ConfigError(f"expected number, got {text!r}") from e


def _parse_size_list(text: str) -> tuple[tuple[int, int], ...]:
    return tuple(_parse_size(p.strip()) for p in text.split(",") if p.strip())


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(_parse_int(p.strip()) for p in text.split(",") if p.strip())


_SCHEMA = {
    "architecture.scale_chain": _parse_size_list,
    "architecture.bottleneck": _parse_size,
    "architecture.channel_widths": _parse_int_list,
    "architecture.kernel": _parse_int,
    "architecture.leaky_slope": _parse_float,
    "architecture.intermediate_heads": _parse_bool,
    "training.steps": _parse_int,
    "training.batch_size": _parse_int,
    "training.lr": _parse_float,
    "training.beta1": _parse_float,
    "training.beta2": _parse_float,
    "training.seed": _parse_int,
    "training.alpha": _parse_float,
    "training.beta": _parse_float,
    "training.dtype": str,
    "training.extractor_weights": str,
    "data.root": str,
    "data.split": str,
    "data.flip": _parse_bool,
    "output.dir": str,
    "output.checkpoint_every": _parse_int,
    "output.log_every": _parse_int,
}

_DEFAULTS = {
    "architecture.kernel": 4,
    "architecture.leaky_slope": 0.2,
    "architecture.intermediate_heads": True,
    "training.steps": 2000,
    "training.batch_size": 1,
    "training.lr": 2e-4,
    "training.beta1": 0.5,
    "training.beta2": 0.999,
    "training.seed": 0,
    "training.alpha": 10.0,
    "training.beta": 0.25,
    "training.dtype": "float32",
    "training.extractor_weights": "",
    "data.split": "train",
    "data.flip": False,
    "output.checkpoint_every": 500,
    "output.log_every": 10,
}


@dataclass(frozen=True)
class RunConfig:
    architecture: ArchitectureConfig
    steps: int
    batch_size: int
    lr: float
    beta1: float
    beta2: float
    seed: int
    alpha: float
    beta: float
    dtype_name: str
    extractor_weights: str
    data_root: str
    split: str
    flip: bool
    out_dir: str
    checkpoint_every: int
    log_every: int
    text: str = ""  # the normalized config text this was parsed from

    @property
    def dtype(self):
        return np.float64 if self.dtype_name == "float64" else np.float32


def parse_config_text(text: str) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value': {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _SCHEMA[key](val)

    for key, default in _DEFAULTS.items():
        values.setdefault(key, default)
    for key in ("architecture.scale_chain", "architecture.bottleneck"):
        if key not in values:
            raise ConfigError(f"required key missing: {key}")

    if values["training.dtype"] not in ("float32", "float64"):
        raise ConfigError(f"training.dtype must be float32 or float64, "
                          f"got {values['training.dtype']!r}")
    for key in ("training.steps", "training.batch_size"):
        if values[key] < 1:
            raise ConfigError(f"{key} must be >= 1, got {values[key]}")
    if values["training.lr"] <= 0:
        raise ConfigError(f"training.lr must be positive, got {values['training.lr']}")
    if values["training.alpha"] < 0 or values["training.beta"] < 0:
        raise ConfigError("training.alpha and training.beta must be >= 0")

    seed = values["training.seed"]
    env_seed = os.environ.get("MSGU_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as e:
            raise ConfigError(f"MSGU_SEED must be an integer, got {env_seed!r}") from e

    arch = ArchitectureConfig(
        scale_chain=values["architecture.scale_chain"],
        bottleneck=values["architecture.bottleneck"],
        channel_widths=values.get("architecture.channel_widths"),
        kernel=values["architecture.kernel"],
        leaky_slope=values["architecture.leaky_slope"],
        intermediate_heads=values["architecture.intermediate_heads"],
    )
    return RunConfig(
        architecture=arch,
        steps=values["training.steps"],
        batch_size=values["training.batch_size"],
        lr=values["training.lr"],
        beta1=values["training.beta1"],
        beta2=values["training.beta2"],
        seed=seed,
        alpha=values["training.alpha"],
        beta=values["training.beta"],
        dtype_name=values["training.dtype"],
        extractor_weights=values["training.extractor_weights"],
        data_root=values.get("data.root", ""),
        split=values["data.split"],
        flip=values["data.flip"],
        out_dir=values.get("output.dir", ""),
        checkpoint_every=values["output.checkpoint_every"],
        log_every=values["output.log_every"],
        text=text,
    )


def load_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def config_to_text(cfg: RunConfig) -> str:
    """Canonical config text (used for checkpoint embedding)."""
    arch = cfg.architecture
    lines = [
        "architecture.scale_chain = " + ",".join(f"{h}x{w}" for h, w in arch.scale_chain),
        f"architecture.bottleneck = {arch.bottleneck[0]}x{arch.bottleneck[1]}",
    ]
    if arch.channel_widths is not None:
        lines.append("architecture.channel_widths = " +
                      ",".join(str(w) for w in arch.channel_widths))
    lines += [
        f"architecture.kernel = {arch.kernel}",
        f"architecture.leaky_slope = {arch.leaky_slope!r}",
        f"architecture.intermediate_heads = {str(arch.intermediate_heads).lower()}",
        f"training.steps = {cfg.steps}",
        f"training.batch_size = {cfg.batch_size}",
        f"training.lr = {cfg.lr!r}",
        f"training.beta1 = {cfg.beta1!r}",
        f"training.beta2 = {cfg.beta2!r}",
        f"training.seed = {cfg.seed}",
        f"training.alpha = {cfg.alpha!r}",
        f"training.beta = {cfg.beta!r}",
        f"training.dtype = {cfg.dtype_name}",
    ]
    if cfg.extractor_weights:
        lines.append(f"training.extractor_weights = {cfg.extractor_weights}")
    if cfg.data_root:
        lines.append(f"data.root = {cfg.data_root}")
    lines += [
        f"data.split = {cfg.split}",
        f"data.flip = {str(cfg.flip).lower()}",
    ]
    if cfg.out_dir:
        lines.append(f"output.dir = {cfg.out_dir}")
    lines += [
        f"output.checkpoint_every = {cfg.checkpoint_every}",
        f"output.log_every = {cfg.log_every}",
    ]
    return "\n".join(lines) + "\n"
