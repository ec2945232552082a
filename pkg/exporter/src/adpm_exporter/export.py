"""Run images through a CNN at several warped scales and dump conv activations.

The image directory holds one subdirectory per class; class indices are the
sorted subdirectory names, recorded in the manifest comments. Every image is
warped (aspect-ignoring resize) to each scale, run in inference mode, and
each requested layer's output is written as one tensor file. Undecodable
images are skipped with a warning; a layer name that does not resolve to a
module is a configuration error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from . import tensor_format


class ExporterError(Exception):
    pass


class ConfigurationError(ExporterError):
    pass


IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


@dataclass(frozen=True)
class ExportJob:
    image_dir: Path
    scales: tuple[int, ...]
    layers: tuple[tuple[str, str], ...]  # (manifest layer name, module path)
    out_dir: Path
    note: str = ""
    device: str = "cpu"

    def __post_init__(self):
        object.__setattr__(self, "image_dir", Path(self.image_dir))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))
        object.__setattr__(self, "layers", tuple((str(a), str(b)) for a, b in self.layers))
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ConfigurationError(f"scales must be positive, got {self.scales}")
        if not self.layers:
            raise ConfigurationError("at least one layer must be requested")


def discover_classes(image_dir: Path) -> dict[str, int]:
    classes = sorted(p.name for p in image_dir.iterdir() if p.is_dir())
    if not classes:
        raise ConfigurationError(f"{image_dir}: no class subdirectories")
    return {name: idx for idx, name in enumerate(classes)}


def _load_image(path: Path, scale: int) -> torch.Tensor | None:
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((scale, scale), Image.BILINEAR)
    except (UnidentifiedImageError, OSError) as exc:
        warnings.warn(f"skipping undecodable image {path}: {exc}")
        return None
    array = np.asarray(rgb, dtype=np.float32) / 255.0  # (H, W, 3)
    return torch.from_numpy(array.transpose(2, 0, 1)).unsqueeze(0)


class _Capture:
    """Forward hooks collecting the outputs of the requested modules."""

    def __init__(self, model: torch.nn.Module, layers: tuple[tuple[str, str], ...]):
        modules = dict(model.named_modules())
        self.outputs: dict[str, torch.Tensor] = {}
        self.handles = []
        for layer_name, module_path in layers:
            if module_path not in modules:
                available = ", ".join(sorted(n for n in modules if n))
                raise ConfigurationError(
                    f"layer {layer_name!r}: module {module_path!r} not found (have: {available})"
                )
            self.handles.append(
                modules[module_path].register_forward_hook(self._make_hook(layer_name))
            )

    def _make_hook(self, layer_name: str):
        def hook(_module, _inputs, output):
            self.outputs[layer_name] = output

        return hook

    def close(self):
        for handle in self.handles:
            handle.remove()


def _activation_to_map(layer_name: str, output: torch.Tensor) -> np.ndarray:
    if output.ndim != 4 or output.shape[0] != 1:
        raise ExporterError(f"layer {layer_name!r}: expected a (1, C, H, W) activation, got {tuple(output.shape)}")
    if output.shape[2] != output.shape[3]:
        raise ExporterError(f"layer {layer_name!r}: spatial map is not square: {tuple(output.shape)}")
    return output[0].permute(1, 2, 0).contiguous().numpy().astype(np.float32)


def export_conv_features(job: ExportJob, model: torch.nn.Module) -> Path:
    """Write one tensor file per image x scale x layer and a manifest; returns the manifest path."""
    class_map = discover_classes(job.image_dir)
    layer_names = [name for name, _ in job.layers]
    model = model.to(job.device).eval()
    capture = _Capture(model, job.layers)

    tensors_dir = job.out_dir / "tensors"
    tensors_dir.mkdir(parents=True, exist_ok=True)
    rows: list[tuple[str, int, str, list[str]]] = []
    try:
        with torch.no_grad():
            for class_name, label in class_map.items():
                for image_path in sorted((job.image_dir / class_name).iterdir()):
                    if image_path.suffix.lower() not in IMAGE_SUFFIXES:
                        continue
                    image_id = f"{class_name}/{image_path.stem}"
                    for scale in job.scales:
                        batch = _load_image(image_path, scale)
                        if batch is None:
                            break
                        capture.outputs.clear()
                        model(batch.to(job.device))
                        paths = []
                        for layer_name in layer_names:
                            if layer_name not in capture.outputs:
                                raise ExporterError(
                                    f"layer {layer_name!r} produced no output during the forward pass"
                                )
                            fmap = _activation_to_map(layer_name, capture.outputs[layer_name].cpu())
                            rel = Path("tensors") / f"{class_name}_{image_path.stem}_{scale}_{layer_name}.adpm"
                            tensor_format.write_feature_map(fmap, job.out_dir / rel)
                            paths.append(str(rel))
                        rows.append((image_id, label, str(scale), paths))
    finally:
        capture.close()

    comments = [f"exported by adpm-exporter; classes: " + ", ".join(f"{n}={i}" for n, i in class_map.items())]
    comments += [f"capture taps: " + ", ".join(f"{n}={m}" for n, m in job.layers)]
    if job.note:
        comments.append(job.note)
    return export_manifest(rows, job.out_dir, num_classes=len(class_map), layer_names=layer_names, comments=comments)


def export_manifest(
    rows: list[tuple[str, int, str, list[str]]],
    out_dir: Path,
    num_classes: int,
    layer_names: list[str],
    comments: list[str] | None = None,
) -> Path:
    if not rows:
        raise ExporterError("no records were exported")
    manifest_path = Path(out_dir) / "export.manifest"
    tensor_format.write_manifest(
        manifest_path, rows, num_classes=num_classes, layer_names=layer_names, comments=comments or []
    )
    return manifest_path
