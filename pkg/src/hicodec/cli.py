"""Command-line surface: encode, decode, sample, inspect, bench."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import codec, image_io
from .model import CodecModel, build_baseline
from .network import MODE_LEARNED, load_weights

_MODE_FLAGS = {"learned": "learned", "rgb": "rgb", "rgb-shared": "rgb_shared"}


def _load_model(weights_path: str, mode_flag: str | None) -> CodecModel:
    with open(weights_path, "rb") as f:
        weights = load_weights(f.read())
    if mode_flag is not None:
        mode = _MODE_FLAGS[mode_flag]
        if weights.mode != mode:
            raise SystemExit(f"error: weights are for mode '{weights.mode}', not '{mode}'")
    if weights.mode == MODE_LEARNED:
        return CodecModel(weights)
    return build_baseline(weights.mode, weights)


def _parse_crop(spec: str) -> tuple[int, int]:
    try:
        w, h = spec.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise SystemExit(f"error: bad crop spec {spec!r}, expected WxH") from None


def _center_crop(img: np.ndarray, w: int, h: int) -> np.ndarray:
    ih, iw = img.shape[:2]
    if ih < h or iw < w:
        raise SystemExit(f"error: image {iw}x{ih} smaller than crop {w}x{h}")
    top = (ih - h) // 2
    left = (iw - w) // 2
    return np.ascontiguousarray(img[top:top + h, left:left + w])


def _emit(report: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(report, indent=2))
        return
    for key, val in report.items():
        if key == "rows":
            continue
        print(f"{key}: {val}")


def cmd_encode(args) -> int:
    model = _load_model(args.weights, args.mode)
    try:
        image = image_io.read_image(args.input)
    except (OSError, image_io.ImageIOError) as e:
        print(f"error: cannot read input: {e}", file=sys.stderr)
        return 1
    scales = None
    if args.scales is not None:
        scales = {int(s) for s in args.scales.split(",")}
    t0 = time.perf_counter()
    result = codec.encode_image(image, model, store_scales=scales)
    dt = time.perf_counter() - t0
    with open(args.output, "wb") as f:
        f.write(result.data)
    report = {
        "input": args.input,
        "output": args.output,
        "bytes": len(result.data),
        "bpsp": codec.bpsp(result.data, *image.shape[:2]),
        "encode_seconds": round(dt, 4),
        "scale_bits": {str(s.scale): s.payload_bits for s in result.scales},
    }
    _emit(report, args.report)
    return 0


def cmd_decode(args) -> int:
    model = _load_model(args.weights, args.mode)
    with open(args.input, "rb") as f:
        data = f.read()
    t0 = time.perf_counter()
    try:
        result = codec.decode_image(data, model)
    except codec.CodecError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    dt = time.perf_counter() - t0
    image_io.write_image(args.output, result.image)
    _emit({"output": args.output, "decode_seconds": round(dt, 4)}, args.report)
    return 0


def cmd_sample(args) -> int:
    model = _load_model(args.weights, args.mode)
    with open(args.input, "rb") as f:
        head = f.read(4)
    if head == codec.MAGIC:
        with open(args.input, "rb") as f:
            data = f.read()
    else:
        # Image input: encode it first, keeping only the requested scales.
        image = image_io.read_image(args.input)
        scales = set(range(model.spec.num_scales + 1))
        if args.scales is not None:
            scales = {int(s) for s in args.scales.split(",")}
        data = codec.encode_image(image, model, store_scales=scales).data
    try:
        result = codec.sample_image(data, model, args.seed)
    except codec.CodecError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    image_io.write_image(args.output, result.image)
    _emit({
        "output": args.output,
        "sampled_scales": result.sampled_scales,
        "stored_bits": result.stored_bits,
        "stored_fraction": round(result.stored_fraction, 4),
    }, args.report)
    return 0


def cmd_inspect(args) -> int:
    with open(args.input, "rb") as f:
        data = f.read()
    try:
        info = codec.inspect_container(data)
    except codec.ContainerFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if args.report == "json":
        print(json.dumps(info, indent=2))
    else:
        for k, v in info.items():
            if k != "substreams":
                print(f"{k}: {v}")
        for sub in info["substreams"]:
            print(f"  scale {sub['scale']}: {sub['channels']}x{sub['height']}"
                  f"x{sub['width']}, {sub['payload_bytes']} bytes")
    return 0


def _bench_one(path: str, model: CodecModel, crop) -> dict:
    image = image_io.read_image(path)
    if crop is not None:
        image = _center_crop(image, *crop)
    t0 = time.perf_counter()
    result = codec.encode_image(image, model)
    t_enc = time.perf_counter() - t0
    t0 = time.perf_counter()
    decoded = codec.decode_image(result.data, model)
    t_dec = time.perf_counter() - t0
    if not np.array_equal(decoded.image, image):
        raise codec.CodecError(f"round trip failed for {path}")
    return {
        "file": os.path.basename(path),
        "bits": 8 * len(result.data),
        "subpixels": 3 * image.shape[0] * image.shape[1],
        "bpsp": codec.bpsp(result.data, *image.shape[:2]),
        "encode_seconds": round(t_enc, 4),
        "decode_seconds": round(t_dec, 4),
        "scale_bits": {str(s.scale): s.payload_bits for s in result.scales},
    }


def cmd_bench(args) -> int:
    model = _load_model(args.weights, args.mode)
    exts = (".ppm", ".pnm", ".png")
    paths = sorted(
        os.path.join(args.corpus, n) for n in os.listdir(args.corpus)
        if n.lower().endswith(exts)
    )
    if not paths:
        print(f"error: no images found in {args.corpus}", file=sys.stderr)
        return 1
    crop = _parse_crop(args.crop) if args.crop else None
    try:
        if args.threads > 1:
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                rows = list(pool.map(lambda p: _bench_one(p, model, crop), paths))
        else:
            rows = [_bench_one(p, model, crop) for p in paths]
    except codec.CodecError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    compare_cols = {}
    for spec in args.compare or []:
        name, _, d = spec.partition("=")
        sizes = {}
        for row in rows:
            other = os.path.join(d, row["file"])
            base = os.path.splitext(other)[0]
            for cand in (other, base):
                if os.path.exists(cand):
                    sizes[row["file"]] = 8 * os.path.getsize(cand) / row["subpixels"]
                    break
        compare_cols[name] = sizes

    total_bits = sum(r["bits"] for r in rows)
    total_sub = sum(r["subpixels"] for r in rows)
    report = {
        "images": len(rows),
        "aggregate_bpsp": total_bits / total_sub,
        "total_encode_seconds": round(sum(r["encode_seconds"] for r in rows), 4),
        "total_decode_seconds": round(sum(r["decode_seconds"] for r in rows), 4),
        "rows": rows,
    }
    if compare_cols:
        report["compare"] = compare_cols
    if args.report == "json":
        print(json.dumps(report, indent=2))
    else:
        for row in rows:
            extra = "".join(
                f"  {name}={cols.get(row['file'], float('nan')):.4f}"
                for name, cols in compare_cols.items()
            )
            print(f"{row['file']}: bpsp={row['bpsp']:.4f} "
                  f"enc={row['encode_seconds']}s dec={row['decode_seconds']}s{extra}")
        print(f"aggregate: bpsp={report['aggregate_bpsp']:.4f} over {len(rows)} images")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hicodec",
                                     description="Hierarchical lossless image codec")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_weights=True):
        if needs_weights:
            p.add_argument("--weights", required=True, help="model weight file")
            p.add_argument("--mode", choices=sorted(_MODE_FLAGS),
                           help="expected pipeline mode (validated against the weights)")
        p.add_argument("--report", choices=["text", "json"], default="text")

    p = sub.add_parser("encode", help="compress an image (PPM/PNG) to a container")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--scales", help="comma-separated scales to store (default all)")
    common(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decompress a container back to an image")
    p.add_argument("input")
    p.add_argument("output")
    common(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sample", help="decode stored scales, sample the rest")
    p.add_argument("input", help="container, or an image to encode partially")
    p.add_argument("output")
    p.add_argument("--scales", help="scales to store when the input is an image")
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("inspect", help="dump container header and sub-stream table")
    p.add_argument("input")
    common(p, needs_weights=False)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("bench", help="round-trip a corpus and report bpsp/timing")
    p.add_argument("corpus", help="directory of images")
    p.add_argument("--crop", help="center-crop to WxH before coding")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--compare", action="append", metavar="NAME=DIR",
                   help="directory of externally-compressed files for comparison columns")
    common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
