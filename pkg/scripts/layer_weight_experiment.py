#!/usr/bin/env python3
"""Plant class signal in one layer and watch the learned fusion weights find it.

Generates a synthetic 5-layer workspace, runs repeated-split evaluation, and
prints the per-layer weights plus accuracy for each repeat.

    python3 scripts/layer_weight_experiment.py --signal-layer 2 --seeds 0 1 2
"""

import argparse
import tempfile
from pathlib import Path

from adpm.config import RunConfig
from adpm.pipeline import run_crossval
from adpm.synth import SynthSpec, gen_synthetic_dataset, manifest_path_for_scale


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--signal-layer", type=int, default=2, help="1-based layer carrying class signal")
    parser.add_argument("--classes", type=int, default=2)
    parser.add_argument("--images-per-class", type=int, default=20)
    parser.add_argument("--sigma", type=float, default=0.1)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--workdir", default=None, help="keep artifacts here instead of a temp dir")
    args = parser.parse_args()

    keep = args.workdir is not None
    root = Path(args.workdir) if keep else Path(tempfile.mkdtemp(prefix="adpm-layerweights-"))
    print(f"workspace root: {root}{'' if keep else ' (temporary)'}")
    print(f"signal layer: conv{args.signal_layer}\n")

    for seed in args.seeds:
        workspace = root / f"seed{seed}"
        spec = SynthSpec(
            num_classes=args.classes,
            images_per_class=args.images_per_class,
            layer_shapes=((6, 4),) * 5,
            signal_layers=frozenset({args.signal_layer}),
            scale_tags=("base",),
            sigma=args.sigma,
            seed=seed,
        )
        gen_synthetic_dataset(spec, workspace)
        cfg = RunConfig(
            manifests={"base": manifest_path_for_scale(workspace, "base")},
            codebook_size=8,
            seed=seed,
            repeats=1,
            split_fraction=0.5,
        )
        report = run_crossval(cfg)
        split = report.splits[0]
        outcome = split.scale_outcomes[0]
        weights = " ".join(f"{name}={w:.3f}" for name, w in zip(outcome.layer_names, outcome.weights))
        print(f"seed {seed}: accuracy={split.metrics.overall:.3f}  {weights}")


if __name__ == "__main__":
    main()
