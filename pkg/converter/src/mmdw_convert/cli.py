"""Command line for the VGG-19 -> MMDW weight converter."""

from __future__ import annotations

import argparse
import sys

from .convert import ConversionError, convert


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mmdw-convert",
        description="Convert VGG-19 pretrained weights (.pth/.pt/.npz) into "
        "an MMDW container with a JSON manifest.",
    )
    p.add_argument("source", help="source weight file")
    p.add_argument("output", help="output .mmdw path")
    p.add_argument(
        "--manifest",
        default=None,
        help="manifest JSON path (default: next to the output)",
    )
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        manifest = convert(args.source, args.output, args.manifest)
    except ConversionError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {args.output}: {len(manifest.tensors)} tensors, "
        f"{manifest.total_bytes} bytes (source {manifest.source})"
    )
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
