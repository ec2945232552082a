"""Per-layer visual vocabularies and word-count histograms.

A codebook is D cluster centers fitted by seeded k-means (k-means++ start,
Lloyd's iterations) over grid-cell descriptors pooled from the training
split of one layer. Encoding assigns every grid cell of a map to its
nearest center and counts assignments per center, so a histogram always
sums to the map's cell count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateDataError, InsufficientDataError, ValidationError
from .tensor_store import FeatureMap, ImageRecord, read_tensor_file, write_tensor_file

DEFAULT_CODEBOOK_SIZE = 300
KMEANS_MAX_ITER = 100
KMEANS_SHIFT_TOL = 1e-6


@dataclass(frozen=True)
class Codebook:
    layer_index: int
    centers: np.ndarray  # (D, p) float64, canonical at f32 storage precision
    seed: int = 0
    wcss_history: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        # Canonicalize through f32 so an in-memory codebook and one reloaded
        # from disk assign descriptors identically.
        centers = np.asarray(self.centers, dtype=np.float32).astype(np.float64)
        if centers.ndim != 2 or centers.shape[0] < 2:
            raise ValidationError(f"codebook needs a (D>=2, p) center matrix, got shape {centers.shape}")
        if not np.all(np.isfinite(centers)):
            raise ValidationError("codebook centers contain non-finite values")
        if len(np.unique(centers, axis=0)) != centers.shape[0]:
            raise DegenerateDataError("codebook has two identical centers")
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class LayerHistogram:
    counts: np.ndarray  # (D,) int64 word counts (float64 once normalized)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise ValidationError(f"histogram must be 1-dimensional, got shape {counts.shape}")
        if np.any(counts < 0):
            raise ValidationError("histogram counts must be non-negative")
        counts = np.ascontiguousarray(counts)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def bins(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def normalized(self) -> "LayerHistogram":
        """L1-normalized copy, for mixing histograms with unequal cell counts."""
        total = self.counts.sum()
        if total == 0:
            raise ValidationError("cannot normalize an empty histogram")
        return LayerHistogram(counts=self.counts.astype(np.float64) / float(total))


def collect_descriptors(
    records: Sequence[ImageRecord],
    layer: int,
    cap: int,
    seed: int,
    min_rows: int = 1,
) -> np.ndarray:
    """Pool all grid-cell descriptors at one layer, subsampled to at most cap rows.

    Subsampling is uniform without replacement and deterministic per seed;
    kept rows stay in dataset order. min_rows is the caller's vocabulary
    size D: fewer total descriptors than that cannot be clustered.
    """
    if not records:
        raise ValidationError("collect_descriptors needs at least one record")
    if cap < 1:
        raise ValidationError(f"cap must be positive, got {cap}")
    blocks = []
    for r in records:
        if layer >= len(r.layer_maps):
            raise ValidationError(f"record {r.image_id!r} has no layer index {layer}")
        blocks.append(r.layer_maps[layer].descriptors())
    matrix = np.concatenate(blocks, axis=0)
    if matrix.shape[0] < min_rows:
        raise InsufficientDataError(
            f"layer {layer}: {matrix.shape[0]} descriptors total, need at least {min_rows}"
        )
    if matrix.shape[0] > cap:
        rng = np.random.default_rng([seed, layer, matrix.shape[0]])
        keep = np.sort(rng.choice(matrix.shape[0], size=cap, replace=False))
        matrix = matrix[keep]
    return matrix


def _plusplus_init(rows: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: spread starts proportionally to squared distance."""
    n = rows.shape[0]
    centers = np.empty((k, rows.shape[1]), dtype=np.float64)
    centers[0] = rows[rng.integers(n)]
    d2 = ((rows - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # every remaining point coincides with a chosen center
            centers[i] = rows[rng.integers(n)]
            continue
        idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total))
        idx = min(idx, n - 1)
        centers[i] = rows[idx]
        d2 = np.minimum(d2, ((rows - centers[i]) ** 2).sum(axis=1))
    return centers


def _assign_all(rows: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest center per row (lowest index on ties) and the squared distances."""
    d2 = ((rows[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(rows.shape[0]), labels]


def train_codebook(descriptors: np.ndarray, size: int, seed: int, layer_index: int = 0) -> Codebook:
    """Lloyd's iterations from a k-means++ start until center shift < 1e-6 or 100 rounds.

    Deterministic given the seed. Empty clusters are re-seeded at the point
    currently farthest from its assigned center, keeping exactly D centers.
    """
    rows = np.asarray(descriptors, dtype=np.float64)
    if rows.ndim != 2:
        raise ValidationError(f"descriptor matrix must be 2-dimensional, got shape {rows.shape}")
    if size < 2:
        raise ValidationError(f"codebook size must be >= 2, got {size}")
    if rows.shape[0] < size:
        raise InsufficientDataError(f"{rows.shape[0]} descriptors cannot fill {size} words")
    if len(np.unique(rows, axis=0)) == 1:
        raise DegenerateDataError("all descriptors identical; clustering is meaningless")

    rng = np.random.default_rng([seed, layer_index])
    centers = _plusplus_init(rows, size, rng)
    wcss_history: list[float] = []
    for _ in range(KMEANS_MAX_ITER):
        labels, best_d2 = _assign_all(rows, centers)
        wcss_history.append(float(best_d2.sum()))
        new_centers = np.empty_like(centers)
        for j in range(size):
            mask = labels == j
            if mask.any():
                new_centers[j] = rows[mask].mean(axis=0)
            else:
                farthest = int(np.argmax(best_d2))
                new_centers[j] = rows[farthest]
                best_d2[farthest] = 0.0
        shift = float(np.abs(new_centers - centers).max())
        centers = new_centers
        if shift < KMEANS_SHIFT_TOL:
            break
    _, final_d2 = _assign_all(rows, centers)
    wcss_history.append(float(final_d2.sum()))
    return Codebook(layer_index=layer_index, centers=centers, seed=seed, wcss_history=tuple(wcss_history))


def assign_word(descriptor: np.ndarray, book: Codebook) -> int:
    """Index of the nearest center by squared Euclidean distance; ties go to the lowest index."""
    x = np.asarray(descriptor, dtype=np.float64)
    if x.shape != (book.dim,):
        raise ValidationError(f"descriptor has shape {x.shape}, codebook expects ({book.dim},)")
    d2 = ((book.centers - x) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def encode_histogram(fmap: FeatureMap, book: Codebook) -> LayerHistogram:
    """Word-count histogram over all grid cells; counts always sum to h*w."""
    if fmap.channels != book.dim:
        raise ValidationError(f"map has {fmap.channels} channels, codebook expects {book.dim}")
    cells = fmap.descriptors()
    labels, _ = _assign_all(cells, book.centers)
    counts = np.bincount(labels, minlength=book.size).astype(np.int64)
    return LayerHistogram(counts=counts)


def save_codebook(book: Codebook, path: str | Path) -> None:
    """Center matrix in the tensor container plus a sidecar text header."""
    path = Path(path)
    fmap = FeatureMap(values=book.centers.astype(np.float32).reshape(book.size, 1, book.dim))
    write_tensor_file(fmap, path)
    sidecar = path.with_suffix(path.suffix + ".meta")
    sidecar.write_text(
        f"layer_index={book.layer_index}\nwords={book.size}\nseed={book.seed}\n",
        encoding="utf-8",
    )


def load_codebook(path: str | Path) -> Codebook:
    path = Path(path)
    fmap = read_tensor_file(path)
    meta = {}
    sidecar = path.with_suffix(path.suffix + ".meta")
    if sidecar.is_file():
        for line in sidecar.read_text(encoding="utf-8").splitlines():
            if "=" in line:
                key, value = line.split("=", 1)
                meta[key.strip()] = value.strip()
    centers = fmap.values.reshape(fmap.height, fmap.channels).astype(np.float64)
    return Codebook(
        layer_index=int(meta.get("layer_index", 0)),
        centers=centers,
        seed=int(meta.get("seed", 0)),
    )
