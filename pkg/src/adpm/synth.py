"""Synthetic multi-layer, multi-scale feature datasets and brute-force oracles.

Class signal is planted by giving each class (or group of classes) its own
descriptor mean on a scaled one-hot lattice, separated by at least six noise
standard deviations; layers or scales without signal draw every class from
one shared cell-indexed base pattern. Values are clipped at zero to mimic
rectified activations. Everything is deterministic in the seed.

The brute-force functions are reference implementations used as test
oracles; they deliberately avoid the shortcuts of the fast paths.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codebook import Codebook, LayerHistogram
from .errors import UnsupportedSizeError, ValidationError
from .tensor_store import (
    DatasetManifest,
    FeatureMap,
    load_manifest,
    write_manifest,
    write_tensor_file,
)

ClassGroups = tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int
    images_per_class: int
    layer_shapes: tuple[tuple[int, int], ...]  # (side, channels) per layer
    signal_layers: frozenset[int] = frozenset((1,))  # 1-based, conv1 is layer 1
    scale_tags: tuple[str, ...] = ("base",)
    signal_scales: frozenset[str] | None = None  # None means every scale
    class_groups: dict[tuple[str, int], ClassGroups] = field(default_factory=dict)
    sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_shapes", tuple(tuple(s) for s in self.layer_shapes))
        object.__setattr__(self, "signal_layers", frozenset(self.signal_layers))
        object.__setattr__(self, "scale_tags", tuple(self.scale_tags))
        if self.signal_scales is not None:
            object.__setattr__(self, "signal_scales", frozenset(self.signal_scales))
        if self.num_classes < 1 or self.images_per_class < 1:
            raise ValidationError("need at least one class and one image per class")
        if self.sigma < 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")
        if not self.layer_shapes:
            raise ValidationError("need at least one layer shape")
        num_layers = len(self.layer_shapes)
        if not self.signal_layers <= set(range(1, num_layers + 1)):
            raise ValidationError(f"signal_layers {sorted(self.signal_layers)} outside 1..{num_layers}")
        if self.signal_scales is not None and not self.signal_scales <= set(self.scale_tags):
            raise ValidationError("signal_scales must be a subset of scale_tags")
        for (tag, layer), groups in self.class_groups.items():
            if tag not in self.scale_tags or layer not in self.signal_layers:
                raise ValidationError(f"class_groups key ({tag!r}, {layer}) is not a signal (scale, layer)")
            members = sorted(c for g in groups for c in g)
            if members != list(range(self.num_classes)):
                raise ValidationError(f"class_groups for ({tag!r}, {layer}) must partition all classes")

    @property
    def num_layers(self) -> int:
        return len(self.layer_shapes)

    def layer_names(self) -> tuple[str, ...]:
        return tuple(f"conv{i}" for i in range(1, self.num_layers + 1))

    def signals_at(self, tag: str, layer: int) -> bool:
        in_scale = self.signal_scales is None or tag in self.signal_scales
        return in_scale and layer in self.signal_layers

    def groups_at(self, tag: str, layer: int) -> ClassGroups:
        default = tuple((c,) for c in range(self.num_classes))
        return self.class_groups.get((tag, layer), default)


def manifest_path_for_scale(out_dir: str | Path, tag: str) -> Path:
    return Path(out_dir) / f"scale_{tag}.manifest"


def _group_of(cls: int, groups: ClassGroups) -> int:
    for g, members in enumerate(groups):
        if cls in members:
            return g
    raise ValidationError(f"class {cls} not covered by groups {groups}")


def _signal_means(groups: ClassGroups, channels: int, sigma: float) -> np.ndarray:
    if channels < len(groups):
        raise ValidationError(
            f"{channels} channels cannot host {len(groups)} separated group means"
        )
    spacing = max(1.0, 6.0 * sigma)  # one-hot sites end up sqrt(2)*spacing >= 6 sigma apart
    means = np.zeros((len(groups), channels))
    for g in range(len(groups)):
        means[g, g] = spacing
    return means


def _shared_bases(side: int, channels: int, sigma: float) -> np.ndarray:
    """Cell-indexed base pattern shared by every class: cycles a few lattice sites."""
    spacing = max(1.0, 6.0 * sigma)
    num_sites = min(3, channels)
    bases = np.zeros((side * side, channels))
    for cell in range(side * side):
        site = cell % num_sites
        bases[cell, site] = 0.5 * spacing
    return bases


def gen_synthetic_dataset(spec: SynthSpec, out_dir: str | Path) -> DatasetManifest:
    """Write tensor files plus one manifest per scale and a combined manifest.

    Returns the combined manifest, reloaded through load_manifest so the
    emitted workspace is validated end to end.
    """
    out_dir = Path(out_dir)
    tensors = out_dir / "tensors"
    tensors.mkdir(parents=True, exist_ok=True)
    layer_names = spec.layer_names()

    rows_by_scale: dict[str, list[tuple[str, int, str, list[str]]]] = {t: [] for t in spec.scale_tags}
    for scale_idx, tag in enumerate(spec.scale_tags):
        scale_dir = tensors / tag
        scale_dir.mkdir(exist_ok=True)
        for cls in range(spec.num_classes):
            for img in range(spec.images_per_class):
                image_id = f"img{cls:02d}_{img:03d}"
                paths = []
                for layer_idx, (side, channels) in enumerate(spec.layer_shapes, start=1):
                    if spec.signals_at(tag, layer_idx):
                        groups = spec.groups_at(tag, layer_idx)
                        means = _signal_means(groups, channels, spec.sigma)
                        base = np.tile(means[_group_of(cls, groups)], (side * side, 1))
                    else:
                        base = _shared_bases(side, channels, spec.sigma)
                    rng = np.random.default_rng([spec.seed, scale_idx, layer_idx, cls, img])
                    cells = base + rng.normal(0.0, spec.sigma, size=base.shape) if spec.sigma > 0 else base
                    cells = np.maximum(cells, 0.0)
                    fmap = FeatureMap(values=cells.reshape(side, side, channels).astype(np.float32))
                    rel = Path("tensors") / tag / f"{image_id}_{layer_names[layer_idx - 1]}.adpm"
                    write_tensor_file(fmap, out_dir / rel)
                    paths.append(str(rel))
                rows_by_scale[tag].append((image_id, cls, tag, paths))

    comment = f"synthetic dataset seed={spec.seed} sigma={spec.sigma}"
    for tag in spec.scale_tags:
        write_manifest(
            manifest_path_for_scale(out_dir, tag),
            rows_by_scale[tag],
            num_classes=spec.num_classes,
            layer_names=layer_names,
            comments=[comment, f"scale={tag}"],
        )
    combined = [row for tag in spec.scale_tags for row in rows_by_scale[tag]]
    write_manifest(
        out_dir / "all.manifest",
        combined,
        num_classes=spec.num_classes,
        layer_names=layer_names,
        comments=[comment],
    )
    return load_manifest(out_dir / "all.manifest")


def brute_force_simplex(
    A: np.ndarray,
    b: np.ndarray,
    lam: float,
    resolution: float = 0.01,
) -> tuple[np.ndarray, float]:
    """Exhaustive minimum of w'(A+lam*I)w - 2b'w over the simplex grid.

    Tractable only for small problems; enforced as L <= 4 and
    resolution >= 0.005.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    L = b.shape[0]
    if L > 4:
        raise UnsupportedSizeError(f"grid search over {L} weights is not supported (max 4)")
    if resolution < 0.005:
        raise UnsupportedSizeError(f"resolution {resolution} below the 0.005 floor")
    m = round(1.0 / resolution)
    if abs(m * resolution - 1.0) > 1e-9:
        raise ValidationError(f"resolution {resolution} does not divide 1 evenly")
    M = A + lam * np.eye(L)

    def evaluate(W: np.ndarray) -> np.ndarray:
        return np.einsum("ki,ij,kj->k", W, M, W) - 2.0 * W @ b

    best_w = None
    best_obj = np.inf
    if L == 1:
        return np.array([1.0]), float(M[0, 0] - 2.0 * b[0])
    # fix all but the last two coordinates, vectorize over the tail
    prefix_ranges = [range(m + 1)] * (L - 2)
    for prefix in itertools.product(*prefix_ranges):
        used = sum(prefix)
        if used > m:
            continue
        remainder = m - used
        j = np.arange(remainder + 1)
        W = np.empty((remainder + 1, L))
        for axis, count in enumerate(prefix):
            W[:, axis] = count / m
        W[:, L - 2] = j / m
        W[:, L - 1] = (remainder - j) / m
        values = evaluate(W)
        k = int(np.argmin(values))
        if values[k] < best_obj:
            best_obj = float(values[k])
            best_w = W[k].copy()
    return best_w, best_obj


def brute_force_histogram(fmap: FeatureMap, book: Codebook) -> LayerHistogram:
    """Reference histogram encoder: plain nested loops, no vectorization."""
    if fmap.channels != book.dim:
        raise ValidationError(f"map has {fmap.channels} channels, codebook expects {book.dim}")
    values = fmap.values.astype(np.float64)
    centers = book.centers
    counts = [0] * book.size
    for i in range(fmap.height):
        for j in range(fmap.width):
            cell = values[i, j]
            best_idx = 0
            best_dist = None
            for d in range(book.size):
                dist = 0.0
                for k in range(book.dim):
                    diff = cell[k] - centers[d, k]
                    dist += diff * diff
                if best_dist is None or dist < best_dist:
                    best_dist = dist
                    best_idx = d
            counts[best_idx] += 1
    return LayerHistogram(counts=np.array(counts, dtype=np.int64))
