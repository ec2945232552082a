"""Command-line bridge: images + model -> adpm tensor workspace.

    adpm-export --images data/scenes --out ws --model builtin:tiny \
        --scale 128 --scale 227 --layer conv1=conv1 --layer conv5=conv5
"""

from __future__ import annotations

import argparse
import sys

from .export import ConfigurationError, ExporterError, ExportJob, export_conv_features
from .models import load_model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adpm-export")
    parser.add_argument("--images", required=True, help="directory with one subdirectory per class")
    parser.add_argument("--out", required=True, help="output workspace directory")
    parser.add_argument("--model", required=True, help="builtin:tiny | script:PATH | factory:MOD:FN | torchvision:NAME[:WEIGHTS]")
    parser.add_argument("--scale", action="append", type=int, required=True, help="warp size; repeat per scale")
    parser.add_argument(
        "--layer",
        action="append",
        required=True,
        metavar="NAME=MODULE",
        help="manifest layer name and module path to capture; repeat per layer",
    )
    parser.add_argument("--note", default="", help="free-text comment recorded in the manifest")
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        layers = []
        for item in args.layer:
            name, sep, module_path = item.partition("=")
            layers.append((name, module_path if sep else name))
        job = ExportJob(
            image_dir=args.images,
            scales=tuple(args.scale),
            layers=tuple(layers),
            out_dir=args.out,
            note=args.note,
            device=args.device,
        )
        model = load_model(args.model)
        manifest = export_conv_features(job, model)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExporterError as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    print(f"manifest written to {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
