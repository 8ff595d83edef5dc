"""Command-line entry point: train / infer / eval / ablate / gradscan / flops."""

from __future__ import annotations

import argparse
import sys

from .errors import MsguError


def _parse_size(text):
    from .config import _parse_size as p

    return p(text)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="msgu",
        description="Multi-scale-gradient U-Net: training, inference, and diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--resume", default=None, help="checkpoint to continue from")

    p_infer = sub.add_parser("infer", help="generate images from a checkpoint")
    p_infer.add_argument("--ckpt", required=True)
    p_infer.add_argument("--in", dest="input", required=True,
                         help="input image or directory")
    p_infer.add_argument("--out", default=None, help="output directory")
    p_infer.add_argument("--degrade", default=None, metavar="HxW",
                         help="degrade input to this scale first")

    p_eval = sub.add_parser("eval", help="PSNR/SSIM/VIF over two directories")
    p_eval.add_argument("--out", required=True, help="model outputs directory")
    p_eval.add_argument("--target", required=True, help="reference directory")
    p_eval.add_argument("--csv", default=None, help="write per-image CSV here")

    p_ablate = sub.add_parser("ablate", help="input-degradation SSIM grid")
    p_ablate.add_argument("--ckpt", required=True)
    p_ablate.add_argument("--data", required=True, help="dataset root")
    p_ablate.add_argument("--split", default="val")
    p_ablate.add_argument("--levels", default=None,
                          help="comma-separated HxW degrade levels (default: all)")
    p_ablate.add_argument("--csv", default="ablation.csv")

    p_scan = sub.add_parser("gradscan", help="gradient histograms, heads on vs off")
    p_scan.add_argument("--config", required=True)
    p_scan.add_argument("--epochs", type=int, default=20)
    p_scan.add_argument("--out", default=None, help="output directory")

    p_flops = sub.add_parser("flops", help="per-layer FLOPs report for a config")
    p_flops.add_argument("--config", required=True)
    p_flops.add_argument("--summary", action="store_true",
                         help="print totals only")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except MsguError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "train":
        from .config import load_config
        from .train import train

        cfg = load_config(args.config)
        result = train(cfg, resume=args.resume, verbose=True)
        print(f"trained to step {result.steps}; losses in {result.csv_path}")
        for path in result.checkpoints:
            print(f"checkpoint: {path}")
        return 0

    if args.command == "infer":
        from .infer import infer

        degrade = _parse_size(args.degrade) if args.degrade else None
        written = infer(args.ckpt, args.input, out_dir=args.out, degrade_to=degrade)
        for path in written:
            print(path)
        return 0

    if args.command == "eval":
        from .metrics import evaluate_dataset

        report = evaluate_dataset(args.out, args.target, csv_path=args.csv)
        print(report.to_csv(), end="")
        return 0

    if args.command == "ablate":
        from .ablate import ablate

        levels = None
        if args.levels:
            levels = [_parse_size(t.strip()) for t in args.levels.split(",")]
        lv, heads, grid = ablate(args.ckpt, args.data, split=args.split,
                                 levels=levels, csv_path=args.csv)
        header = "input," + ",".join(f"{h}x{w}" for h, w in heads)
        print(header)
        for r, (h, w) in enumerate(lv):
            print(f"{h}x{w}," + ",".join(f"{v:.4f}" for v in grid[r]))
        print(f"grid written to {args.csv}")
        return 0

    if args.command == "gradscan":
        from .config import load_config
        from .gradscan import gradscan

        cfg = load_config(args.config)
        results = gradscan(cfg, epochs=args.epochs, out_dir=args.out)
        for label, res in results.items():
            print(f"{label}: {res.csv_path}")
            for g in sorted(res.medians):
                print(f"  {g}: median |grad| {res.medians[g]:.3e}, "
                      f"frac below 1e-8: {res.near_zero_frac[g]:.4f}")
        return 0

    if args.command == "flops":
        from .config import load_config
        from .flopcount import flops_report, format_report

        cfg = load_config(args.config)
        report = flops_report(cfg.architecture)
        print(format_report(report, per_layer=not args.summary), end="")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
