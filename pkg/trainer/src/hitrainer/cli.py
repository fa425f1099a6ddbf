"""Command-line surface: train, gradcheck, export-golden."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import torch

from hicodec import image_io
from hicodec.network import NetworkSpec, load_weights

from . import golden, gradcheck
from .model import CodecNet
from .train import TrainConfig, TrainError, train

_MODE_FLAGS = {"learned": "learned", "rgb": "rgb", "rgb-shared": "rgb_shared"}


def _spec_from_args(args) -> NetworkSpec:
    return NetworkSpec(
        num_scales=args.scales, filters=args.filters,
        latent_channels=args.latent_channels, mixture_components=args.mixture,
        n_resblocks=args.resblocks,
    )


def _add_spec_args(p):
    p.add_argument("--scales", type=int, default=3)
    p.add_argument("--filters", type=int, default=64)
    p.add_argument("--latent-channels", type=int, default=5)
    p.add_argument("--mixture", type=int, default=10)
    p.add_argument("--resblocks", type=int, default=8)
    p.add_argument("--mode", choices=sorted(_MODE_FLAGS), default="learned")
    p.add_argument("--seed", type=int, default=0)


def cmd_train(args) -> int:
    cfg = TrainConfig(
        mode=_MODE_FLAGS[args.mode], crop=args.crop, batch_size=args.batch,
        steps=args.steps, learning_rate=args.lr, decay_factor=args.decay,
        decay_interval=args.decay_interval, seed=args.seed,
        spec=_spec_from_args(args),
    )
    try:
        _, history = train(cfg, args.corpus, weights_out=args.output,
                           on_nan_dump=args.output + ".nan-dump")
    except TrainError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for step, bpsp in history:
        print(f"step {step}: {bpsp:.4f} bpsp")
    print(f"weights written to {args.output}")
    return 0


def cmd_gradcheck(args) -> int:
    torch.manual_seed(args.seed)
    net = CodecNet(_spec_from_args(args), _MODE_FLAGS[args.mode], seed=args.seed)
    rng = np.random.default_rng(args.seed)
    x = torch.from_numpy(
        rng.integers(0, 256, (1, 3, args.crop, args.crop)).astype(np.float32))
    report = gradcheck.grad_check(net, x, entries_per_tensor=args.entries)
    worst = gradcheck.max_relative_error(report)
    if args.report == "json":
        print(json.dumps({"max_relative_error": worst, "per_tensor": report}, indent=2))
    else:
        for name, err in sorted(report.items(), key=lambda kv: -kv[1])[:10]:
            print(f"{name}: {err:.2e}")
        print(f"max relative error: {worst:.2e}")
    return 0 if worst < 1e-3 else 1


def cmd_export_golden(args) -> int:
    with open(args.weights, "rb") as f:
        net = CodecNet.from_weights(load_weights(f.read()))
    crop_img = image_io.read_image(args.input)
    if crop_img.shape[0] < args.crop or crop_img.shape[1] < args.crop:
        print("error: input smaller than crop", file=sys.stderr)
        return 1
    crop_img = crop_img[:args.crop, :args.crop]
    bundle = golden.export_golden(net, crop_img)
    golden.save_golden(args.output, bundle)
    print(f"golden bundle written to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hitrainer",
                                     description="Train and verify hicodec models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a directory of images")
    p.add_argument("corpus")
    p.add_argument("output", help="weight file to write")
    p.add_argument("--crop", type=int, default=32)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--decay", type=float, default=0.75)
    p.add_argument("--decay-interval", type=int, default=500)
    _add_spec_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="compare analytic and numeric gradients")
    p.add_argument("--crop", type=int, default=8)
    p.add_argument("--entries", type=int, default=4)
    p.add_argument("--report", choices=["text", "json"], default="text")
    _add_spec_args(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export-golden", help="freeze a parity bundle")
    p.add_argument("input", help="image supplying the crop")
    p.add_argument("output", help=".npz bundle to write")
    p.add_argument("--weights", required=True)
    p.add_argument("--crop", type=int, default=16)
    p.set_defaults(func=cmd_export_golden)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
