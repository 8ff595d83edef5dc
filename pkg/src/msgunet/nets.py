"""Generator, per-scale patch discriminators, and the frozen feature stack.

The generator is a U-Net whose encoder re-ingests the source image at every
scale of the configured chain (concat + 1x1 fusion) and whose decoder emits
an image head at every scale of the chain. Skips are additive, so encoder
and decoder widths must match per level; that holds by construction since
both sides share one width list.

Spatial arithmetic: stride-2 resamplers use the configured even kernel with
padding k/2-1, which halves/doubles exactly. A single stride-1 convolution
with an even kernel cannot preserve size under symmetric integer padding,
so the two finest-level blocks pair paddings (k/2-1, k/2) to restore size,
and all other stride-1 blocks use kernel k-1 (odd, same-padded).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import RunningStats, Tensor

DISC_WIDTHS = (64, 128, 256, 512)
EXTRACTOR_WIDTHS = (16, 32, 64, 128, 256)
WEIGHT_INIT_STD = 0.02
HEAD_KERNEL = 3


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArchitectureConfig:
    """Scale chain (coarsest first), bottleneck size, and per-level widths."""

    scale_chain: tuple[tuple[int, int], ...]
    bottleneck: tuple[int, int]
    channel_widths: tuple[int, ...] | None = None
    kernel: int = 4
    leaky_slope: float = 0.2
    intermediate_heads: bool = True

    def __post_init__(self):
        chain = tuple(tuple(s) for s in self.scale_chain)
        object.__setattr__(self, "scale_chain", chain)
        object.__setattr__(self, "bottleneck", tuple(self.bottleneck))
        if self.channel_widths is not None:
            object.__setattr__(self, "channel_widths", tuple(self.channel_widths))
        self.validate()

    def validate(self):
        chain = self.scale_chain
        if not chain:
            raise ConfigError("scale_chain must not be empty")
        for h, w in chain:
            if h < 1 or w < 1:
                raise ConfigError(f"scale_chain entry {h}x{w} has non-positive dims")
        ratios = {h / w for h, w in chain}
        if len(ratios) != 1 or ratios.pop() not in (0.5, 1.0, 2.0):
            raise ConfigError(
                f"scale_chain entries must share one aspect ratio (1:1 or 2:1): {chain}"
            )
        for (h0, w0), (h1, w1) in zip(chain, chain[1:]):
            if (h1, w1) != (2 * h0, 2 * w0):
                raise ConfigError(
                    f"consecutive scales must double: {h0}x{w0} -> {h1}x{w1}"
                )
        bh, bw = self.bottleneck
        fh, fw = chain[0]
        if bh < 1 or bw < 1:
            raise ConfigError(f"bottleneck {bh}x{bw} has non-positive dims")
        steps_h = _halvings(fh, bh)
        steps_w = _halvings(fw, bw)
        if steps_h is None or steps_w is None or steps_h != steps_w:
            raise ConfigError(
                f"bottleneck {bh}x{bw} must divide the coarsest scale {fh}x{fw} "
                f"by one power of two"
            )
        if self.kernel < 2 or self.kernel % 2 != 0:
            raise ConfigError(
                f"kernel must be an even integer >= 2 (stride-2 resamplers need it), "
                f"got {self.kernel}"
            )
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")
        if self.channel_widths is not None:
            if len(self.channel_widths) != self.num_levels:
                raise ConfigError(
                    f"channel_widths has {len(self.channel_widths)} entries, "
                    f"need one per level: {self.num_levels}"
                )
            if any(w < 1 for w in self.channel_widths):
                raise ConfigError("channel_widths must be positive")

    @property
    def aspect(self) -> float:
        h, w = self.scale_chain[0]
        return h / w

    @property
    def level_hw(self) -> tuple[tuple[int, int], ...]:
        """Resolutions finest -> bottleneck, one per level."""
        out = []
        h, w = self.scale_chain[-1]
        bh = self.bottleneck[0]
        while h >= bh:
            out.append((h, w))
            if (h, w) == self.bottleneck:
                break
            h //= 2
            w //= 2
        return tuple(out)

    @property
    def num_levels(self) -> int:
        return len(self.level_hw)

    @property
    def widths(self) -> tuple[int, ...]:
        if self.channel_widths is not None:
            return self.channel_widths
        return tuple(min(16 * 2 ** i, 256) for i in range(self.num_levels))


def _halvings(big: int, small: int) -> int | None:
    k = 0
    while big > small:
        if big % 2:
            return None
        big //= 2
        k += 1
    return k if big == small else None


# ---------------------------------------------------------------------------
# layer plans (pure shape walk, no allocation)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str                      # conv | conv_transpose | batch_norm | act
    cin: int
    cout: int
    in_hw: tuple[int, int]
    out_hw: tuple[int, int]
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    op: str = ""                   # activation kind for kind == "act"

    @property
    def param_count(self) -> int:
        if self.kind in ("conv", "conv_transpose"):
            return self.cout * self.cin * self.kernel * self.kernel + self.cout
        if self.kind == "batch_norm":
            return 2 * self.cout
        return 0


def _conv_out(hw, k, stride, pad):
    h, w = hw
    return ((h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1)


def _block_specs(name, cin, cout, in_hw, k, stride, pad, slope, norm=True):
    out_hw = _conv_out(in_hw, k, stride, pad)
    specs = [LayerSpec(f"{name}.conv", "conv", cin, cout, in_hw, out_hw, k, stride, pad)]
    if norm:
        specs.append(LayerSpec(f"{name}.bn", "batch_norm", cout, cout, out_hw, out_hw))
    specs.append(LayerSpec(f"{name}.act", "act", cout, cout, out_hw, out_hw,
                           op=f"leaky_relu:{slope}"))
    return specs, out_hw


@dataclass(frozen=True)
class GeneratorPlan:
    config: ArchitectureConfig
    layers: tuple[LayerSpec, ...]
    injection_hw: tuple[tuple[int, int], ...]   # finest -> coarsest
    head_hw: tuple[tuple[int, int], ...]        # coarsest -> finest
    param_count: int


def generator_plan(config: ArchitectureConfig) -> GeneratorPlan:
    """Full per-layer description of the generator; a dry shape walk."""
    chain = config.scale_chain
    levels = config.level_hw
    widths = config.widths
    n = len(chain)
    k = config.kernel
    k_main = k - 1
    slope = config.leaky_slope
    specs: list[LayerSpec] = []

    # encoder, level 0 (finest): two stride-1 blocks with paired paddings
    hw = levels[0]
    half = k // 2
    group, hw = _block_specs("enc0.a", 3, widths[0], hw, k, 1, half - 1, slope)
    specs += group
    group, hw = _block_specs("enc0.b", widths[0], widths[0], hw, k, 1, half, slope)
    specs += group
    if hw != levels[0]:
        raise ConfigError(f"level 0 blocks do not preserve {levels[0]}, got {hw}")

    for i in range(1, len(levels)):
        group, hw = _block_specs(f"enc{i}.down", widths[i - 1], widths[i], hw, k, 2,
                                 half - 1, slope)
        specs += group
        if hw != levels[i]:
            raise ConfigError(f"encoder level {i} expected {levels[i]}, got {hw}")
        if i <= n - 1:  # injection level: concat resized source, fuse 1x1
            group, hw = _block_specs(f"enc{i}.fuse", widths[i] + 3, widths[i], hw,
                                     1, 1, 0, slope)
            specs += group
        group, hw = _block_specs(f"enc{i}.main", widths[i], widths[i], hw, k_main, 1,
                                 (k_main - 1) // 2, slope)
        specs += group

    group, hw = _block_specs("bottleneck", widths[-1], widths[-1], hw, k_main, 1,
                             (k_main - 1) // 2, slope)
    specs += group

    heads: list[tuple[int, int]] = []
    for i in range(len(levels) - 2, -1, -1):
        if levels[i] != ((levels[i + 1][0] - 1) * 2 - 2 * (half - 1) + k,
                         (levels[i + 1][1] - 1) * 2 - 2 * (half - 1) + k):
            raise ConfigError(f"decoder level {i} upsample does not reach {levels[i]}")
        specs.append(LayerSpec(f"dec{i}.up.conv", "conv_transpose", widths[i + 1],
                               widths[i], levels[i + 1], levels[i], k, 2, half - 1))
        specs.append(LayerSpec(f"dec{i}.up.bn", "batch_norm", widths[i], widths[i],
                               levels[i], levels[i]))
        specs.append(LayerSpec(f"dec{i}.up.act", "act", widths[i], widths[i],
                               levels[i], levels[i], op=f"leaky_relu:{slope}"))
        group, hw = _block_specs(f"dec{i}.merge", widths[i], widths[i], levels[i],
                                 k_main, 1, (k_main - 1) // 2, slope)
        specs += group
        if i <= n - 1 and (config.intermediate_heads or i == 0):
            specs.append(LayerSpec(f"dec{i}.head.conv", "conv", widths[i], 3,
                                   levels[i], levels[i], HEAD_KERNEL, 1,
                                   (HEAD_KERNEL - 1) // 2))
            specs.append(LayerSpec(f"dec{i}.head.act", "act", 3, 3, levels[i],
                                   levels[i], op="tanh"))
            heads.append(levels[i])

    injections = tuple(levels[i] for i in range(n))
    return GeneratorPlan(
        config=config,
        layers=tuple(specs),
        injection_hw=injections,
        head_hw=tuple(heads),
        param_count=sum(s.param_count for s in specs),
    )


def discriminator_plan(in_hw: tuple[int, int]) -> tuple[LayerSpec, ...]:
    """Fixed patch-discriminator topology on a 6-channel input."""
    widths = DISC_WIDTHS
    strides = (2, 2, 2, 1)
    specs: list[LayerSpec] = []
    hw = in_hw
    cin = 6
    for b, (cout, stride) in enumerate(zip(widths, strides), start=1):
        out_hw = _conv_out(hw, 4, stride, 1)
        if out_hw[0] < 1 or out_hw[1] < 1:
            raise ShapeError(
                f"discriminator block{b} output {out_hw} from input {in_hw}; "
                f"scales must be at least 16x16"
            )
        specs.append(LayerSpec(f"block{b}.conv", "conv", cin, cout, hw, out_hw, 4, stride, 1))
        if b > 1:
            specs.append(LayerSpec(f"block{b}.bn", "batch_norm", cout, cout, out_hw, out_hw))
        specs.append(LayerSpec(f"block{b}.act", "act", cout, cout, out_hw, out_hw,
                               op="leaky_relu:0.2"))
        hw = out_hw
        cin = cout
    specs.append(LayerSpec("final.conv", "conv", cin, 1, hw, hw, 1, 1, 0))
    return tuple(specs)


def extractor_plan(in_hw: tuple[int, int]) -> tuple[LayerSpec, ...]:
    """Frozen feature stack: one stride-1 stage then four stride-2 stages."""
    specs: list[LayerSpec] = []
    hw = in_hw
    cin = 3
    for s, cout in enumerate(EXTRACTOR_WIDTHS, start=1):
        if s == 1:
            k, stride, pad = 3, 1, 1
        else:
            k, stride, pad = 4, 2, 1
        out_hw = _conv_out(hw, k, stride, pad)
        if out_hw[0] < 1 or out_hw[1] < 1:
            raise ShapeError(
                f"feature extractor stage{s} output {out_hw} from input {in_hw}"
            )
        specs.append(LayerSpec(f"stage{s}.conv", "conv", cin, cout, hw, out_hw, k, stride, pad))
        specs.append(LayerSpec(f"stage{s}.act", "act", cout, cout, out_hw, out_hw,
                               op="leaky_relu:0.2"))
        hw = out_hw
        cin = cout
    return tuple(specs)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class Conv2d:
    def __init__(self, spec: LayerSpec, rng, dtype, requires_grad=True, orthogonal=False):
        self.spec = spec
        shape = (spec.cout, spec.cin, spec.kernel, spec.kernel)
        if orthogonal:
            w = _orthogonal(rng, spec.cout, spec.cin * spec.kernel ** 2)
            w = w.reshape(shape)
        else:
            w = rng.normal(0.0, WEIGHT_INIT_STD, size=shape)
        self.weight = Tensor(w.astype(dtype), requires_grad=requires_grad)
        self.bias = Tensor(np.zeros(spec.cout, dtype=dtype), requires_grad=requires_grad)

    def __call__(self, x):
        return T.conv2d(x, self.weight, self.bias, self.spec.stride, self.spec.padding)

    def named_parameters(self, prefix):
        return [(f"{prefix}.weight", self.weight), (f"{prefix}.bias", self.bias)]


class ConvTranspose2d:
    def __init__(self, spec: LayerSpec, rng, dtype):
        self.spec = spec
        shape = (spec.cin, spec.cout, spec.kernel, spec.kernel)
        w = rng.normal(0.0, WEIGHT_INIT_STD, size=shape)
        self.weight = Tensor(w.astype(dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(spec.cout, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return T.conv_transpose2d(x, self.weight, self.bias, self.spec.stride,
                                  self.spec.padding)

    def named_parameters(self, prefix):
        return [(f"{prefix}.weight", self.weight), (f"{prefix}.bias", self.bias)]


class BatchNorm2d:
    def __init__(self, channels, dtype, eps=1e-5, momentum=0.1):
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.stats = RunningStats(channels, dtype=dtype)
        self.eps = eps
        self.momentum = momentum

    def __call__(self, x, train):
        return T.batch_norm2d(x, self.gamma, self.beta, self.stats, train,
                              self.eps, self.momentum)

    def named_parameters(self, prefix):
        return [(f"{prefix}.gamma", self.gamma), (f"{prefix}.beta", self.beta)]


def _orthogonal(rng, rows, cols):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diagonal(r))[None, :]
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(q[:rows, :cols])


class _Block:
    """Conv (or transpose) + optional batch norm + leaky relu."""

    def __init__(self, conv, bn, slope):
        self.conv = conv
        self.bn = bn
        self.slope = slope

    def __call__(self, x, train):
        x = self.conv(x)
        if self.bn is not None:
            x = self.bn(x, train)
        return T.leaky_relu(x, self.slope)

    def named_parameters(self, prefix):
        out = self.conv.named_parameters(f"{prefix}.conv")
        if self.bn is not None:
            out += self.bn.named_parameters(f"{prefix}.bn")
        return out


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------

class MsgUNetGenerator:
    """U-Net with per-scale source injection and per-scale output heads."""

    def __init__(self, config: ArchitectureConfig, seed: int, dtype=np.float32):
        self.config = config
        self.plan = generator_plan(config)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        chain = config.scale_chain
        levels = config.level_hw
        widths = config.widths
        n = len(chain)
        k = config.kernel
        k_main = k - 1
        half = k // 2
        slope = config.leaky_slope

        def block(name, cin, cout, kk, stride, pad, in_hw, norm=True):
            spec = LayerSpec(f"{name}.conv", "conv", cin, cout, in_hw,
                             _conv_out(in_hw, kk, stride, pad), kk, stride, pad)
            conv = Conv2d(spec, rng, dtype)
            bn = BatchNorm2d(cout, dtype) if norm else None
            return _Block(conv, bn, slope)

        self.enc0_a = block("enc0.a", 3, widths[0], k, 1, half - 1, levels[0])
        self.enc0_b = block("enc0.b", widths[0], widths[0], k, 1, half,
                            _conv_out(levels[0], k, 1, half - 1))
        self.enc_down = []
        self.enc_fuse = []
        self.enc_main = []
        for i in range(1, len(levels)):
            self.enc_down.append(block(f"enc{i}.down", widths[i - 1], widths[i], k, 2,
                                       half - 1, levels[i - 1]))
            if i <= n - 1:
                self.enc_fuse.append(block(f"enc{i}.fuse", widths[i] + 3, widths[i],
                                           1, 1, 0, levels[i]))
            else:
                self.enc_fuse.append(None)
            self.enc_main.append(block(f"enc{i}.main", widths[i], widths[i], k_main, 1,
                                       (k_main - 1) // 2, levels[i]))
        self.bottleneck = block("bottleneck", widths[-1], widths[-1], k_main, 1,
                                (k_main - 1) // 2, levels[-1])
        self.dec_up = {}
        self.dec_merge = {}
        self.dec_head = {}
        for i in range(len(levels) - 2, -1, -1):
            up_spec = LayerSpec(f"dec{i}.up.conv", "conv_transpose", widths[i + 1],
                                widths[i], levels[i + 1], levels[i], k, 2, half - 1)
            up_conv = ConvTranspose2d(up_spec, rng, dtype)
            self.dec_up[i] = _Block(up_conv, BatchNorm2d(widths[i], dtype), slope)
            self.dec_merge[i] = block(f"dec{i}.merge", widths[i], widths[i], k_main, 1,
                                      (k_main - 1) // 2, levels[i])
            if i <= n - 1 and (config.intermediate_heads or i == 0):
                head_spec = LayerSpec(f"dec{i}.head.conv", "conv", widths[i], 3,
                                      levels[i], levels[i], HEAD_KERNEL, 1,
                                      (HEAD_KERNEL - 1) // 2)
                self.dec_head[i] = Conv2d(head_spec, rng, dtype)

    def forward(self, pyramid: list[Tensor], train: bool = True) -> list[Tensor]:
        """Coarsest-first input pyramid -> coarsest-first output images."""
        chain = self.config.scale_chain
        levels = self.config.level_hw
        n = len(chain)
        if len(pyramid) != n:
            raise ShapeError(f"pyramid has {len(pyramid)} entries, scale chain has {n}")
        for entry, (h, w) in zip(pyramid, chain):
            if entry.data.ndim != 4 or entry.data.shape[1] != 3 \
                    or entry.data.shape[2:] != (h, w):
                raise ShapeError(
                    f"pyramid entry shape {entry.data.shape} does not match scale {h}x{w}"
                )
            lo, hi = float(entry.data.min()), float(entry.data.max())
            if lo < -1.000001 or hi > 1.000001:
                raise ShapeError(f"pyramid values outside [-1, 1]: range [{lo}, {hi}]")

        by_level = {i: pyramid[n - 1 - i] for i in range(n)}
        e = self.enc0_b(self.enc0_a(by_level[0], train), train)
        skips = [e]
        for i in range(1, len(levels)):
            e = self.enc_down[i - 1](e, train)
            fuse = self.enc_fuse[i - 1]
            if fuse is not None:
                e = fuse(T.concat_channels(e, by_level[i]), train)
            e = self.enc_main[i - 1](e, train)
            skips.append(e)
        d = self.bottleneck(skips[-1], train)
        outputs = []
        for i in range(len(levels) - 2, -1, -1):
            d = self.dec_up[i](d, train)
            d = T.add(d, skips[i])
            d = self.dec_merge[i](d, train)
            head = self.dec_head.get(i)
            if head is not None:
                outputs.append(T.tanh(head(d)))
        return outputs

    def named_parameters(self) -> dict[str, Tensor]:
        out = []
        out += self.enc0_a.named_parameters("enc0.a")
        out += self.enc0_b.named_parameters("enc0.b")
        for i in range(1, len(self.config.level_hw)):
            out += self.enc_down[i - 1].named_parameters(f"enc{i}.down")
            if self.enc_fuse[i - 1] is not None:
                out += self.enc_fuse[i - 1].named_parameters(f"enc{i}.fuse")
            out += self.enc_main[i - 1].named_parameters(f"enc{i}.main")
        out += self.bottleneck.named_parameters("bottleneck")
        for i in sorted(self.dec_up, reverse=True):
            out += self.dec_up[i].named_parameters(f"dec{i}.up")
            out += self.dec_merge[i].named_parameters(f"dec{i}.merge")
            if i in self.dec_head:
                out += self.dec_head[i].named_parameters(f"dec{i}.head.conv")
        return dict(out)

    def named_stats(self) -> dict[str, RunningStats]:
        out = {}

        def put(prefix, blk):
            if isinstance(blk, _Block) and blk.bn is not None:
                out[f"{prefix}.bn"] = blk.bn.stats

        put("enc0.a", self.enc0_a)
        put("enc0.b", self.enc0_b)
        for i in range(1, len(self.config.level_hw)):
            put(f"enc{i}.down", self.enc_down[i - 1])
            if self.enc_fuse[i - 1] is not None:
                put(f"enc{i}.fuse", self.enc_fuse[i - 1])
            put(f"enc{i}.main", self.enc_main[i - 1])
        put("bottleneck", self.bottleneck)
        for i in sorted(self.dec_up, reverse=True):
            put(f"dec{i}.up", self.dec_up[i])
            put(f"dec{i}.merge", self.dec_merge[i])
        return out


def build_generator(config: ArchitectureConfig, seed: int, dtype=np.float32) -> MsgUNetGenerator:
    return MsgUNetGenerator(config, seed, dtype)


# ---------------------------------------------------------------------------
# discriminator
# ---------------------------------------------------------------------------

class PatchDiscriminator:
    """Fixed four-block patch classifier over a (source || candidate) pair.

    forward returns the patch logit map plus one feature tap per block and
    the logits themselves (P = 5 tensors).
    """

    P = 5

    def __init__(self, seed: int, dtype=np.float32, slope: float = 0.2):
        rng = np.random.default_rng(seed)
        self.slope = slope
        strides = (2, 2, 2, 1)
        self.blocks = []
        cin = 6
        for b, (cout, stride) in enumerate(zip(DISC_WIDTHS, strides), start=1):
            spec = LayerSpec(f"block{b}.conv", "conv", cin, cout, (0, 0), (0, 0),
                             4, stride, 1)
            conv = Conv2d(spec, rng, dtype)
            bn = BatchNorm2d(cout, dtype) if b > 1 else None
            self.blocks.append(_Block(conv, bn, slope))
            cin = cout
        final_spec = LayerSpec("final.conv", "conv", cin, 1, (0, 0), (0, 0), 1, 1, 0)
        self.final = Conv2d(final_spec, rng, dtype)

    def forward(self, source: Tensor, candidate: Tensor, train: bool = True):
        if source.data.shape != candidate.data.shape:
            raise ShapeError(
                f"discriminator inputs disagree: {source.data.shape} vs "
                f"{candidate.data.shape}"
            )
        if source.data.shape[1] != 3:
            raise ShapeError(f"discriminator inputs must be 3-channel, got {source.data.shape}")
        x = T.concat_channels(source, candidate)
        feats = []
        for blk in self.blocks:
            x = blk(x, train)
            feats.append(x)
        logits = self.final(x)
        feats.append(logits)
        return logits, feats

    def named_parameters(self) -> dict[str, Tensor]:
        out = []
        for b, blk in enumerate(self.blocks, start=1):
            out += blk.named_parameters(f"block{b}")
        out += self.final.named_parameters("final.conv")
        return dict(out)

    def named_stats(self) -> dict[str, RunningStats]:
        out = {}
        for b, blk in enumerate(self.blocks, start=1):
            if blk.bn is not None:
                out[f"block{b}.bn"] = blk.bn.stats
        return out


class DiscriminatorBank:
    """One patch discriminator per scale, independent parameters."""

    def __init__(self, scales: tuple[tuple[int, int], ...], seed: int, dtype=np.float32):
        self.scales = tuple(tuple(s) for s in scales)
        for h, w in self.scales:
            discriminator_plan((h, w))  # validates feasibility
        self.members = [PatchDiscriminator(seed + 1000 * k, dtype)
                        for k in range(len(self.scales))]

    def __len__(self):
        return len(self.members)

    def forward(self, k: int, source: Tensor, candidate: Tensor, train: bool = True):
        h, w = self.scales[k]
        if source.data.shape[2:] != (h, w):
            raise ShapeError(
                f"discriminator {k} expects {h}x{w}, got {source.data.shape[2:]}"
            )
        return self.members[k].forward(source, candidate, train)

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for k, d in enumerate(self.members):
            for name, p in d.named_parameters().items():
                out[f"disc{k}.{name}"] = p
        return out

    def named_stats(self) -> dict[str, RunningStats]:
        out = {}
        for k, d in enumerate(self.members):
            for name, s in d.named_stats().items():
                out[f"disc{k}.{name}"] = s
        return out


# ---------------------------------------------------------------------------
# frozen feature extractor
# ---------------------------------------------------------------------------

class FeatureExtractor:
    """Five frozen conv stages with a tap after each activation.

    Weights are seeded orthogonal by default or loaded from a checkpoint
    file; they never require grad, so backward through the taps reaches the
    image argument only.
    """

    U = 5

    def __init__(self, seed: int = 0, dtype=np.float32, weights: dict | None = None):
        rng = np.random.default_rng(seed)
        self.stages = []
        cin = 3
        for s, cout in enumerate(EXTRACTOR_WIDTHS, start=1):
            k, stride, pad = (3, 1, 1) if s == 1 else (4, 2, 1)
            spec = LayerSpec(f"stage{s}.conv", "conv", cin, cout, (0, 0), (0, 0),
                             k, stride, pad)
            conv = Conv2d(spec, rng, dtype, requires_grad=False, orthogonal=True)
            if weights is not None:
                wkey, bkey = f"stage{s}.conv.weight", f"stage{s}.conv.bias"
                if wkey not in weights or bkey not in weights:
                    raise ShapeError(f"extractor weights missing {wkey}/{bkey}")
                if weights[wkey].shape != conv.weight.data.shape:
                    raise ShapeError(
                        f"extractor {wkey} shape {weights[wkey].shape} != "
                        f"{conv.weight.data.shape}"
                    )
                conv.weight.data = np.ascontiguousarray(weights[wkey], dtype=dtype)
                conv.bias.data = np.ascontiguousarray(weights[bkey], dtype=dtype)
            self.stages.append(conv)
            cin = cout

    def forward(self, image: Tensor) -> list[Tensor]:
        if image.data.ndim != 4 or image.data.shape[1] != 3:
            raise ShapeError(f"extractor expects (N,3,H,W), got {image.data.shape}")
        taps = []
        x = image
        for conv in self.stages:
            x = T.leaky_relu(conv(x), 0.2)
            taps.append(x)
        return taps

    def named_parameters(self) -> dict[str, Tensor]:
        out = []
        for s, conv in enumerate(self.stages, start=1):
            out += conv.named_parameters(f"stage{s}.conv")
        return dict(out)
