"""Command-line front end: stylize a content image against a style image."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .image_io import (
    RgbImage,
    fit_long_side,
    load_png,
    postprocess,
    preprocess,
    resize_bilinear,
    save_png,
)
from .losses import BNStats, FusionSpec, GaussianMMD, Gram, LinearMMD, PolyMMD
from .network import build_vgg19
from .optimize import DEFAULT_STYLE_LAYERS, TransferConfig, run_transfer, trace_to_csv
from .weights_io import load_container

DEFAULT_LONG_SIDE = 512
MIN_SIDE = 32  # five pooling stages need at least 32 px per side


def _method_kind(name: str, poly_c: float):
    table = {
        "gram": Gram,
        "linear": LinearMMD,
        "gaussian": GaussianMMD,
        "bn": BNStats,
    }
    if name == "poly":
        return PolyMMD(c=poly_c)
    if name in table:
        return table[name]()
    return None


def parse_method(text: str, poly_c: float):
    """Parse a method name or a fusion spec like ``bn:0.5+poly:0.5``."""
    if "+" not in text and ":" not in text:
        return _method_kind(text.strip(), poly_c)
    members = []
    for part in text.split("+"):
        name, _, weight_text = part.strip().partition(":")
        kind = _method_kind(name.strip(), poly_c)
        if kind is None:
            return None
        try:
            weight = float(weight_text)
        except ValueError:
            return None
        if weight < 0:
            return None
        members.append((kind, weight))
    try:
        return FusionSpec(tuple(members))
    except ValueError:
        return None


def parse_size(text: str) -> tuple[int, int] | None:
    w, sep, h = text.lower().partition("x")
    if not sep:
        return None
    try:
        width, height = int(w), int(h)
    except ValueError:
        return None
    if width < 1 or height < 1:
        return None
    return width, height


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stylemmd",
        description="Stylize an image by aligning convolutional feature "
        "distributions with a style image.",
    )
    p.add_argument("--content", required=True, help="content image (PNG)")
    p.add_argument("--style", required=True, help="style image (PNG)")
    p.add_argument("--weights", required=True, help="MMDW weight container for VGG-19")
    p.add_argument("--output", required=True, help="output PNG path")
    p.add_argument(
        "--method",
        default="gram",
        help="gram | linear | poly | gaussian | bn, or a fusion like 'bn:0.5+poly:0.5'",
    )
    p.add_argument("--gamma", type=float, default=1.0, help="style/content balance factor")
    p.add_argument("--poly-c", type=float, default=0.0, help="polynomial kernel offset")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=0.005, help="relative-change stopping tolerance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--style-size", default=None, metavar="WxH", help="resize the style image")
    p.add_argument("--pooling", choices=("max", "avg"), default="max")
    p.add_argument(
        "--layer-weights",
        default=None,
        metavar="CSV",
        help="per-style-layer weights, e.g. '1,1,1,1,1'",
    )
    p.add_argument("--trace", default=None, help="write the loss trace CSV here")
    p.add_argument(
        "--save-every",
        type=int,
        default=0,
        metavar="N",
        help="write an intermediate PNG every N iterations",
    )
    return p


def _check_min_side(img: RgbImage, label: str) -> None:
    if img.width < MIN_SIDE or img.height < MIN_SIDE:
        raise ValueError(
            f"{label} image is {img.width}x{img.height}; "
            f"both sides must be at least {MIN_SIDE} px"
        )


def _snapshot_path(output: Path, iteration: int) -> Path:
    return output.with_name(f"{output.stem}_{iteration:04d}{output.suffix or '.png'}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage to stderr
        return int(exc.code or 0)

    method = parse_method(args.method, args.poly_c)
    if method is None:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: unknown method {args.method!r}", file=sys.stderr)
        return 2
    layer_weights = None
    if args.layer_weights is not None:
        try:
            values = [float(v) for v in args.layer_weights.split(",")]
        except ValueError:
            values = None
        if values is None or len(values) != len(DEFAULT_STYLE_LAYERS) or min(values) < 0:
            parser.print_usage(sys.stderr)
            print(
                f"{parser.prog}: error: --layer-weights needs "
                f"{len(DEFAULT_STYLE_LAYERS)} non-negative comma-separated values",
                file=sys.stderr,
            )
            return 2
        layer_weights = dict(zip(DEFAULT_STYLE_LAYERS, values))
    style_size = None
    if args.style_size is not None:
        style_size = parse_size(args.style_size)
        if style_size is None:
            parser.print_usage(sys.stderr)
            print(
                f"{parser.prog}: error: --style-size must look like 512x384",
                file=sys.stderr,
            )
            return 2

    try:
        content = fit_long_side(load_png(args.content), DEFAULT_LONG_SIDE)
        style = load_png(args.style)
        if style_size is not None:
            style = resize_bilinear(style, *style_size)
        _check_min_side(content, "content")
        _check_min_side(style, "style")

        spec = build_vgg19(load_container(args.weights), pooling=args.pooling)
        config = TransferConfig(
            method=method,
            gamma=args.gamma,
            layer_weights=layer_weights,
            max_iters=args.max_iters,
            rel_tol=args.tol,
            seed=args.seed,
            pooling=args.pooling,
        )

        output = Path(args.output)
        on_iteration = None
        if args.save_every > 0:
            def on_iteration(t, image, _row, _every=args.save_every, _out=output):
                if t % _every == 0:
                    save_png(postprocess(image), _snapshot_path(_out, t))

        result, trace = run_transfer(
            spec, preprocess(content), preprocess(style), config,
            on_iteration=on_iteration,
        )
        save_png(postprocess(result), output)
        if args.trace is not None:
            Path(args.trace).write_text(trace_to_csv(trace))
    except Exception as exc:  # runtime failure -> exit 1 with a message
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
