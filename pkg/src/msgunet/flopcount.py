"""Analytic FLOPs accounting from layer plans; no tensors are allocated.

Conventions (batch 1): a convolution costs 2*K*K*Cin*Cout*Hout*Wout FLOPs
(2x multiply-accumulate); a transposed convolution costs
2*K*K*Cin*Cout*Hin*Win (its MACs touch every input position); batch norm
and activations cost 2 FLOPs per output element. Concat/add plumbing is
not counted.
"""

from __future__ import annotations

from dataclasses import dataclass

from .nets import (ArchitectureConfig, LayerSpec, discriminator_plan,
                   extractor_plan, generator_plan)


def layer_flops(spec: LayerSpec) -> int:
    if spec.kind == "conv":
        h, w = spec.out_hw
        return 2 * spec.kernel * spec.kernel * spec.cin * spec.cout * h * w
    if spec.kind == "conv_transpose":
        h, w = spec.in_hw
        return 2 * spec.kernel * spec.kernel * spec.cin * spec.cout * h * w
    if spec.kind in ("batch_norm", "act"):
        h, w = spec.out_hw
        return 2 * spec.cout * h * w
    return 0


@dataclass(frozen=True)
class FlopsRow:
    network: str
    layer: str
    kind: str
    flops: int
    params: int


@dataclass(frozen=True)
class FlopsReport:
    rows: tuple[FlopsRow, ...]

    def network_total(self, network: str) -> int:
        return sum(r.flops for r in self.rows if r.network == network)

    @property
    def networks(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.network not in seen:
                seen.append(r.network)
        return seen

    @property
    def grand_total(self) -> int:
        return sum(r.flops for r in self.rows)

    @property
    def generator_total(self) -> int:
        return self.network_total("generator")


def flops_report(config: ArchitectureConfig) -> FlopsReport:
    rows: list[FlopsRow] = []
    plan = generator_plan(config)
    for spec in plan.layers:
        rows.append(FlopsRow("generator", spec.name, spec.kind,
                             layer_flops(spec), spec.param_count))
    head_hw = plan.head_hw
    for k, hw in enumerate(head_hw):
        for spec in discriminator_plan(hw):
            rows.append(FlopsRow(f"discriminator_{hw[0]}x{hw[1]}", spec.name,
                                 spec.kind, layer_flops(spec), spec.param_count))
    for hw in head_hw:
        for spec in extractor_plan(hw):
            rows.append(FlopsRow(f"extractor_{hw[0]}x{hw[1]}", spec.name,
                                 spec.kind, layer_flops(spec), spec.param_count))
    return FlopsReport(rows=tuple(rows))


def format_report(report: FlopsReport, per_layer: bool = True) -> str:
    lines = []
    if per_layer:
        lines.append(f"{'network':<28} {'layer':<22} {'kind':<15} "
                     f"{'FLOPs':>16} {'params':>12}")
        for r in report.rows:
            lines.append(f"{r.network:<28} {r.layer:<22} {r.kind:<15} "
                         f"{r.flops:>16,} {r.params:>12,}")
        lines.append("")
    for net in report.networks:
        lines.append(f"total {net:<24} {report.network_total(net):>20,} FLOPs")
    lines.append(f"total all networks           {report.grand_total:>20,} FLOPs")
    gen_t = report.generator_total / 1e12
    lines.append(f"generator inference cost: {gen_t:.4f} TFLOPs")
    return "\n".join(lines) + "\n"
