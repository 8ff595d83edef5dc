"""Alternating GAN training over scale pyramids, with checkpoint/resume.

Per step: build source/target pyramids for the batch, run the generator
once, then (1) update the whole discriminator bank against real pairs and
detached fakes, and (2) update the generator through fresh discriminator
forwards (adversarial + weighted feature-matching + weighted perceptual).

Everything that varies per step is a pure function of (seed, step), so a
resumed run continues bit-for-bit at 64-bit precision.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as D
from . import losses as L
from . import tensor as T
from .checkpoint import load_arrays, save_arrays
from .config import RunConfig, config_to_text, parse_config_text
from .errors import CheckpointError, ConfigError, TrainingError
from .nets import DiscriminatorBank, FeatureExtractor, MsgUNetGenerator
from .optim import Adam
from .tensor import Tensor


@dataclass
class TrainResult:
    steps: int
    csv_path: str
    checkpoints: list[str]
    final_report: L.LossReport | None


class TrainState:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        dtype = cfg.dtype
        self.gen = MsgUNetGenerator(cfg.architecture, seed=cfg.seed, dtype=dtype)
        self.head_hw = self.gen.plan.head_hw
        self.bank = DiscriminatorBank(self.head_hw, seed=cfg.seed + 1, dtype=dtype)
        weights = None
        if cfg.extractor_weights:
            weights = load_arrays(cfg.extractor_weights)
        self.extractor = FeatureExtractor(seed=cfg.seed + 2, dtype=dtype, weights=weights)
        self.opt_g = Adam(self.gen.named_parameters(), lr=cfg.lr,
                          betas=(cfg.beta1, cfg.beta2))
        self.opt_d = Adam(self.bank.named_parameters(), lr=cfg.lr,
                          betas=(cfg.beta1, cfg.beta2))
        self.step = 0


def build_state(cfg: RunConfig) -> TrainState:
    return TrainState(cfg)


# ---------------------------------------------------------------------------
# checkpoint plumbing
# ---------------------------------------------------------------------------

def state_arrays(state: TrainState) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {
        "meta.step": np.array(state.step, dtype=np.int64),
        "meta.config": np.frombuffer(
            config_to_text(state.cfg).encode("utf-8"), dtype=np.uint8
        ).copy(),
    }
    for name, p in state.gen.named_parameters().items():
        out[f"gen.param.{name}"] = p.data
    for name, s in state.gen.named_stats().items():
        out[f"gen.stats.{name}.mean"] = s.mean
        out[f"gen.stats.{name}.var"] = s.var
    for name, p in state.bank.named_parameters().items():
        out[f"bank.param.{name}"] = p.data
    for name, s in state.bank.named_stats().items():
        out[f"bank.stats.{name}.mean"] = s.mean
        out[f"bank.stats.{name}.var"] = s.var
    for key, arr in state.opt_g.state_arrays().items():
        out[f"opt_g.{key}"] = arr
    for key, arr in state.opt_d.state_arrays().items():
        out[f"opt_d.{key}"] = arr
    return out


def save_checkpoint(path, state: TrainState):
    save_arrays(path, state_arrays(state))


def open_checkpoint(path) -> tuple[RunConfig, dict[str, np.ndarray]]:
    arrays = load_arrays(path)
    if "meta.config" not in arrays or "meta.step" not in arrays:
        raise CheckpointError(f"{path}: missing meta records")
    cfg = parse_config_text(bytes(arrays["meta.config"]).decode("utf-8"))
    return cfg, arrays


def restore_state(state: TrainState, arrays: dict[str, np.ndarray]):
    """Load a checkpoint into freshly built state; validates before mutating."""
    expected = state_arrays(state)
    missing = sorted(set(expected) - set(arrays))
    extra = sorted(set(arrays) - set(expected))
    if missing or extra:
        raise CheckpointError(
            f"checkpoint does not match architecture: missing {missing[:4]}, "
            f"unexpected {extra[:4]}"
        )
    for key in expected:
        if key in ("meta.step", "meta.config"):
            continue
        if arrays[key].shape != expected[key].shape:
            raise CheckpointError(
                f"checkpoint record {key}: shape {arrays[key].shape} != "
                f"{expected[key].shape}"
            )

    gen_params = state.gen.named_parameters()
    bank_params = state.bank.named_parameters()
    for name, p in gen_params.items():
        p.data = np.ascontiguousarray(arrays[f"gen.param.{name}"], dtype=p.data.dtype)
    for name, s in state.gen.named_stats().items():
        s.mean = np.ascontiguousarray(arrays[f"gen.stats.{name}.mean"])
        s.var = np.ascontiguousarray(arrays[f"gen.stats.{name}.var"])
        s.initialized = True
    for name, p in bank_params.items():
        p.data = np.ascontiguousarray(arrays[f"bank.param.{name}"], dtype=p.data.dtype)
    for name, s in state.bank.named_stats().items():
        s.mean = np.ascontiguousarray(arrays[f"bank.stats.{name}.mean"])
        s.var = np.ascontiguousarray(arrays[f"bank.stats.{name}.var"])
        s.initialized = True
    state.opt_g.load_state_arrays(
        {k[len("opt_g."):]: v for k, v in arrays.items() if k.startswith("opt_g.")})
    state.opt_d.load_state_arrays(
        {k[len("opt_d."):]: v for k, v in arrays.items() if k.startswith("opt_d.")})
    state.step = int(arrays["meta.step"])


# ---------------------------------------------------------------------------
# data scheduling
# ---------------------------------------------------------------------------

def sample_position(seed: int, position: int, n: int) -> int:
    """Deterministic shuffled index for global sample slot `position`."""
    epoch, slot = divmod(position, n)
    perm = np.random.default_rng([seed, 7919, epoch]).permutation(n)
    return int(perm[slot])


class PyramidCache:
    """Pyramids per sample id, built once, reused across steps."""

    def __init__(self, manifest: D.DatasetManifest, chain, dtype):
        self.manifest = manifest
        self.chain = chain
        self.dtype = dtype
        self._cache: dict[int, tuple[list[np.ndarray], list[np.ndarray]]] = {}

    def get(self, index: int):
        hit = self._cache.get(index)
        if hit is None:
            pair = D.read_pair(self.manifest, index, self.dtype)
            hit = (D.make_pyramid(pair.source, self.chain),
                   D.make_pyramid(pair.target, self.chain))
            self._cache[index] = hit
        return hit


def _batch_pyramids(cache: PyramidCache, cfg: RunConfig, step: int, n: int):
    chain = cfg.architecture.scale_chain
    xs = [[] for _ in chain]
    ys = [[] for _ in chain]
    for j in range(cfg.batch_size):
        position = step * cfg.batch_size + j
        idx = sample_position(cfg.seed, position, n)
        x_pyr, y_pyr = cache.get(idx)
        if cfg.flip:
            coin = np.random.default_rng([cfg.seed, 104729, position]).random()
            if coin < 0.5:
                x_pyr = [e[:, :, ::-1] for e in x_pyr]
                y_pyr = [e[:, :, ::-1] for e in y_pyr]
        for k in range(len(chain)):
            xs[k].append(x_pyr[k])
            ys[k].append(y_pyr[k])
    x_t = [Tensor(np.stack(entries)) for entries in xs]
    y_t = [Tensor(np.stack(entries)) for entries in ys]
    return x_t, y_t


# ---------------------------------------------------------------------------
# objectives (shared with the gradient diagnostic)
# ---------------------------------------------------------------------------

def head_entries(pyramid_entries, chain, head_hw):
    """Subset of pyramid entries matching the generator's head scales."""
    index = {tuple(hw): i for i, hw in enumerate(chain)}
    return [pyramid_entries[index[tuple(hw)]] for hw in head_hw]


def discriminator_objective(state: TrainState, x_heads, y_heads, z_pyr):
    terms = []
    for k in range(len(state.bank)):
        real_logits, _ = state.bank.forward(k, x_heads[k], y_heads[k], train=True)
        fake_logits, _ = state.bank.forward(k, x_heads[k], z_pyr[k].detach(), train=True)
        terms.append(L.adversarial_d_loss(real_logits, fake_logits))
    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    return total, [float(t.data) for t in terms]


def generator_objective(state: TrainState, x_heads, y_heads, z_pyr,
                        weights: L.LossWeights):
    adv_terms = []
    real_feats = []
    fake_feats = []
    for k in range(len(state.bank)):
        fake_logits, f_feats = state.bank.forward(k, x_heads[k], z_pyr[k], train=True)
        adv_terms.append(L.adversarial_g_loss(fake_logits))
        if weights.alpha > 0:
            _, r_feats = state.bank.forward(k, x_heads[k], y_heads[k], train=True)
            real_feats.append(r_feats)
            fake_feats.append(f_feats)
    fm = L.feature_matching_loss(real_feats, fake_feats) if weights.alpha > 0 else None
    perc = L.perceptual_loss(state.extractor, y_heads, z_pyr) if weights.beta > 0 else None
    return L.total_g_loss(adv_terms, fm, perc, weights)


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------

def train(cfg: RunConfig, resume=None, verbose: bool = False) -> TrainResult:
    if not cfg.data_root:
        raise ConfigError("data.root is required for training")
    if not cfg.out_dir:
        raise ConfigError("output.dir is required for training")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    state = build_state(cfg)
    if resume is not None:
        ck_cfg, arrays = open_checkpoint(resume)
        if ck_cfg.architecture != cfg.architecture:
            raise CheckpointError(
                "resume checkpoint was trained with a different architecture"
            )
        restore_state(state, arrays)

    manifest = D.load_dataset(cfg.data_root, cfg.split)
    cache = PyramidCache(manifest, cfg.architecture.scale_chain, cfg.dtype)
    chain = cfg.architecture.scale_chain
    weights = L.LossWeights(alpha=cfg.alpha, beta=cfg.beta)
    n_heads = len(state.head_hw)

    csv_path = out_dir / "loss_log.csv"
    if state.step == 0 or not csv_path.exists():
        csv_path.write_text(L.LossReport.csv_header(n_heads) + "\n")

    checkpoints: list[str] = []
    report = None
    with open(csv_path, "a", newline="") as csv_file:
        for step in range(state.step, cfg.steps):
            x_pyr, y_pyr = _batch_pyramids(cache, cfg, step, len(manifest))
            x_heads = head_entries(x_pyr, chain, state.head_hw)
            y_heads = head_entries(y_pyr, chain, state.head_hw)

            z_pyr = state.gen.forward(x_pyr, train=True)

            d_total, d_values = discriminator_objective(state, x_heads, y_heads, z_pyr)
            T.backward(d_total)
            state.opt_d.step()

            g_total, report = generator_objective(state, x_heads, y_heads, z_pyr, weights)
            T.backward(g_total)
            state.opt_g.step()

            report.adv_d = tuple(d_values)
            report.total_d = float(d_total.data)
            report.check_consistency()
            if not np.isfinite(report.total_g) or not np.isfinite(report.total_d):
                raise TrainingError(f"non-finite loss at step {step + 1}: "
                                    f"G={report.total_g}, D={report.total_d}")

            state.step = step + 1
            csv_file.write(report.csv_row(state.step) + "\n")
            if verbose and state.step % cfg.log_every == 0:
                csv_file.flush()
                print(f"step {state.step}: total_g={report.total_g:.5f} "
                      f"total_d={report.total_d:.5f} fm={report.fm:.5f} "
                      f"perc={report.perc:.5f}")
            if cfg.checkpoint_every > 0 and state.step % cfg.checkpoint_every == 0 \
                    and state.step < cfg.steps:
                path = out_dir / f"ckpt_step{state.step}.msgu"
                save_checkpoint(path, state)
                checkpoints.append(str(path))

    final_path = out_dir / f"ckpt_step{state.step}.msgu"
    save_checkpoint(final_path, state)
    checkpoints.append(str(final_path))
    return TrainResult(steps=state.step, csv_path=str(csv_path),
                       checkpoints=checkpoints, final_report=report)


# ---------------------------------------------------------------------------
# eval-mode loading (inference, ablation)
# ---------------------------------------------------------------------------

def load_generator(ckpt_path, dtype=None) -> tuple[RunConfig, MsgUNetGenerator]:
    """Rebuild the generator of a checkpoint for eval-mode use."""
    cfg, arrays = open_checkpoint(ckpt_path)
    if dtype is not None and np.dtype(dtype) != cfg.dtype:
        raise CheckpointError(
            f"checkpoint dtype {cfg.dtype_name} does not match requested {np.dtype(dtype)}"
        )
    gen = MsgUNetGenerator(cfg.architecture, seed=cfg.seed, dtype=cfg.dtype)
    params = gen.named_parameters()
    for name, p in params.items():
        key = f"gen.param.{name}"
        if key not in arrays:
            raise CheckpointError(f"checkpoint missing generator record {key}")
        if arrays[key].shape != p.data.shape:
            raise CheckpointError(
                f"checkpoint record {key} shape {arrays[key].shape} != {p.data.shape}"
            )
    for name, p in params.items():
        p.data = np.ascontiguousarray(arrays[f"gen.param.{name}"], dtype=p.data.dtype)
    for name, s in gen.named_stats().items():
        s.mean = np.ascontiguousarray(arrays[f"gen.stats.{name}.mean"])
        s.var = np.ascontiguousarray(arrays[f"gen.stats.{name}.var"])
        s.initialized = True
    return cfg, gen
