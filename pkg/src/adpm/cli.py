"""Command-line entry points.

Subcommands: train, predict, crossval, gen-synth, inspect-weights.
Exit codes: 0 success, 2 validation/config error, 1 internal error.
Set ADPM_THREADS to parallelize cross-validation splits.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline, synth
from .config import RunConfig, parse_config, render_config
from .errors import ValidationError


def _add_train(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("train", help="train codebooks, fusion weights, and SVMs on full manifests")
    p.add_argument("--config", required=True, help="flat key=value run config")
    p.add_argument("--output-dir", default=None, help="bundle directory (default: config output_dir)")


def _add_predict(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("predict", help="score test manifests with a trained bundle")
    p.add_argument("--bundle", required=True, help="directory written by `adpm train`")
    p.add_argument(
        "--manifest",
        action="append",
        required=True,
        metavar="TAG=PATH",
        help="test manifest for one scale; repeat per scale",
    )
    p.add_argument("--output-dir", default=None, help="where to write report files")


def _add_crossval(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("crossval", help="repeated stratified splits or k-fold evaluation")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)


def _add_gen_synth(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("gen-synth", help="generate a synthetic multi-scale workspace")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--images-per-class", type=int, default=20)
    p.add_argument(
        "--layers",
        default="6:4,6:4,6:4,6:4,6:4",
        help="comma list of side:channels per layer",
    )
    p.add_argument("--signal-layers", default="2", help="comma list of 1-based layer numbers")
    p.add_argument("--scales", default="base", help="comma list of scale tags")
    p.add_argument("--signal-scales", default=None, help="comma list; default: all scales")
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--codebook-size", type=int, default=8, help="written into the emitted run config")


def _add_inspect(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("inspect-weights", help="print learned per-layer weights of a bundle")
    p.add_argument("--bundle", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adpm")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_train(sub)
    _add_predict(sub)
    _add_crossval(sub)
    _add_gen_synth(sub)
    _add_inspect(sub)
    return parser


def _cmd_train(args) -> int:
    cfg = parse_config(args.config)
    bundle = pipeline.run_train(cfg, output_dir=args.output_dir)
    target = args.output_dir or cfg.output_dir
    for tag in sorted(bundle.scales):
        weights = " ".join(f"{w:.12g}" for w in bundle.scales[tag].weights)
        print(f"scale {tag}: weights=[{weights}]")
    if target is None:
        print("note: no output_dir configured, bundle was not serialized", file=sys.stderr)
    else:
        print(f"bundle written to {target}")
    return 0


def _cmd_predict(args) -> int:
    manifests = {}
    for item in args.manifest:
        if "=" not in item:
            raise ValidationError(f"--manifest expects TAG=PATH, got {item!r}")
        tag, path = item.split("=", 1)
        manifests[tag] = Path(path)
    bundle = pipeline.load_bundle(args.bundle)
    report, _rows = pipeline.run_predict(bundle, manifests)
    if args.output_dir:
        pipeline.write_report_files(report, args.output_dir)
    sys.stdout.write(pipeline.render_report(report))
    return 0


def _cmd_crossval(args) -> int:
    cfg = parse_config(args.config)
    report = pipeline.run_crossval(cfg, output_dir=args.output_dir)
    sys.stdout.write(pipeline.render_report(report))
    return 0


def _cmd_gen_synth(args) -> int:
    layer_shapes = []
    for item in args.layers.split(","):
        side, channels = item.split(":")
        layer_shapes.append((int(side), int(channels)))
    scales = tuple(t.strip() for t in args.scales.split(",") if t.strip())
    signal_scales = None
    if args.signal_scales:
        signal_scales = frozenset(t.strip() for t in args.signal_scales.split(","))
    spec = synth.SynthSpec(
        num_classes=args.classes,
        images_per_class=args.images_per_class,
        layer_shapes=tuple(layer_shapes),
        signal_layers=frozenset(int(v) for v in args.signal_layers.split(",")),
        scale_tags=scales,
        signal_scales=signal_scales,
        sigma=args.sigma,
        seed=args.seed,
    )
    out = Path(args.out)
    manifest = synth.gen_synthetic_dataset(spec, out)
    cfg = RunConfig(
        manifests={tag: synth.manifest_path_for_scale(out, tag) for tag in scales},
        codebook_size=args.codebook_size,
        seed=args.seed,
        repeats=1,
        descriptor_cap=20000,
        output_dir=out / "runs",
    )
    (out / "synth.cfg").write_text(render_config(cfg, relative_to=out), encoding="utf-8")
    print(f"wrote {len(manifest.records)} records across {len(scales)} scale(s) to {out}")
    print(f"run config: {out / 'synth.cfg'}")
    return 0


def _cmd_inspect(args) -> int:
    bundle = pipeline.load_bundle(args.bundle)
    for tag in sorted(bundle.scales):
        model = bundle.scales[tag]
        print(f"scale {tag}:")
        for name, weight in zip(model.layer_names, model.weights):
            print(f"  {name}\t{weight:.12g}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "predict": _cmd_predict,
    "crossval": _cmd_crossval,
    "gen-synth": _cmd_gen_synth,
    "inspect-weights": _cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
