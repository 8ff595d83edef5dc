"""The training objective: least-squares adversarial terms per scale, a
discriminator feature-matching term, and a perceptual term, combined as

    total_G = sum_k adv_g_k + alpha * fm + beta * perceptual

and total_D = sum_k adv_d_k. Distance terms are element-mean L1, which
realizes the per-layer 1/elements normalization and keeps alpha and beta
scale-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 10.0
    beta: float = 0.25

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(
                f"loss weights must be non-negative: alpha={self.alpha}, beta={self.beta}"
            )


@dataclass
class LossReport:
    """Per-term values of one optimization step."""

    adv_g: tuple[float, ...] = ()
    adv_d: tuple[float, ...] = ()
    fm: float = 0.0
    perc: float = 0.0
    total_g: float = 0.0
    total_d: float = 0.0
    alpha: float = 10.0
    beta: float = 0.25

    def check_consistency(self, rel: float = 1e-6):
        want_g = sum(self.adv_g) + self.alpha * self.fm + self.beta * self.perc
        want_d = sum(self.adv_d)
        for got, want, name in ((self.total_g, want_g, "G"), (self.total_d, want_d, "D")):
            tol = rel * max(1.0, abs(want))
            if abs(got - want) > tol:
                raise ConfigError(
                    f"loss report inconsistent for {name}: total {got} vs parts {want}"
                )

    @staticmethod
    def csv_header(n_scales: int) -> str:
        cols = ["step"]
        cols += [f"adv_g_{k + 1}" for k in range(n_scales)]
        cols += [f"adv_d_{k + 1}" for k in range(n_scales)]
        cols += ["fm", "perc", "total_g", "total_d"]
        return ",".join(cols)

    def csv_row(self, step: int) -> str:
        vals = [str(step)]
        vals += [repr(v) for v in self.adv_g]
        vals += [repr(v) for v in self.adv_d]
        vals += [repr(self.fm), repr(self.perc), repr(self.total_g), repr(self.total_d)]
        return ",".join(vals)


def adversarial_d_loss(real_logits: Tensor, fake_logits: Tensor) -> Tensor:
    """0.5 * (mean((real - 1)^2) + mean(fake^2)); fake must be detached."""
    if real_logits.data.shape != fake_logits.data.shape:
        raise ShapeError(
            f"adversarial_d_loss logit shapes differ: {real_logits.data.shape} vs "
            f"{fake_logits.data.shape}"
        )
    real_term = T.mean(T.square(T.shift(real_logits, -1.0)))
    fake_term = T.mean(T.square(fake_logits))
    return T.scale(T.add(real_term, fake_term), 0.5)


def adversarial_g_loss(fake_logits: Tensor) -> Tensor:
    """mean((fake - 1)^2) over the patch map."""
    return T.mean(T.square(T.shift(fake_logits, -1.0)))


def feature_matching_loss(real_feats: list[list[Tensor]],
                          fake_feats: list[list[Tensor]]) -> Tensor:
    """Element-mean L1 between discriminator taps, summed over scales/layers.

    The real branch is detached here, so the gradient reaches the generator
    only (through the fake features).
    """
    if len(real_feats) != len(fake_feats):
        raise ShapeError(
            f"feature_matching_loss scale count differs: {len(real_feats)} vs "
            f"{len(fake_feats)}"
        )
    total = None
    for k, (reals, fakes) in enumerate(zip(real_feats, fake_feats)):
        if len(reals) != len(fakes):
            raise ShapeError(
                f"feature_matching_loss layer count differs at scale {k}: "
                f"{len(reals)} vs {len(fakes)}"
            )
        for r, f in zip(reals, fakes):
            term = T.l1_distance(f, r.detach())
            total = term if total is None else T.add(total, term)
    if total is None:
        raise ShapeError("feature_matching_loss called with no features")
    return total


def perceptual_loss(extractor, targets: list[Tensor], outputs: list[Tensor]) -> Tensor:
    """Element-mean L1 between extractor taps of target and output pyramids."""
    if len(targets) != len(outputs):
        raise ShapeError(
            f"perceptual_loss pyramid lengths differ: {len(targets)} vs {len(outputs)}"
        )
    total = None
    for k, (y, z) in enumerate(zip(targets, outputs)):
        if y.data.shape != z.data.shape:
            raise ShapeError(
                f"perceptual_loss scale {k} misaligned: {y.data.shape} vs {z.data.shape}"
            )
        feats_y = extractor.forward(y.detach())
        feats_z = extractor.forward(z)
        for fy, fz in zip(feats_y, feats_z):
            term = T.l1_distance(fz, fy.detach())
            total = term if total is None else T.add(total, term)
    if total is None:
        raise ShapeError("perceptual_loss called with empty pyramids")
    return total


def total_g_loss(adv_terms: list[Tensor], fm: Tensor | None, perc: Tensor | None,
                 weights: LossWeights) -> tuple[Tensor, LossReport]:
    """Weighted sum of the generator's terms plus an itemized report.

    fm/perc may be None when their weight is zero; the corresponding report
    column is exactly 0.
    """
    if weights.alpha < 0 or weights.beta < 0:
        raise ConfigError("negative loss weights")
    total = None
    for term in adv_terms:
        total = term if total is None else T.add(total, term)
    if total is None:
        raise ShapeError("total_g_loss needs at least one adversarial term")
    if fm is not None and weights.alpha > 0:
        total = T.add(total, T.scale(fm, weights.alpha))
    if perc is not None and weights.beta > 0:
        total = T.add(total, T.scale(perc, weights.beta))
    report = LossReport(
        adv_g=tuple(float(t.data) for t in adv_terms),
        fm=float(fm.data) if (fm is not None and weights.alpha > 0) else 0.0,
        perc=float(perc.data) if (perc is not None and weights.beta > 0) else 0.0,
        total_g=float(total.data),
        alpha=weights.alpha,
        beta=weights.beta,
    )
    return total, report
