"""Histogram-intersection Gram matrices, the label-agreement target, and kernel fusion.

The per-layer kernel is sum_d min(h1[d], h2[d]); it is symmetric, positive
semidefinite on non-negative histograms, and bounded by either histogram's
total. The fused kernel is the convex combination of per-layer Grams under
the learned simplex weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codebook import LayerHistogram
from .errors import ValidationError

SYMMETRY_TOL = 1e-9
SIMPLEX_TOL = 1e-9


def stack_histograms(histograms: Sequence[LayerHistogram]) -> np.ndarray:
    if not histograms:
        raise ValidationError("need at least one histogram")
    bins = histograms[0].bins
    if any(h.bins != bins for h in histograms):
        raise ValidationError("histograms have mismatched bin counts")
    return np.stack([h.counts for h in histograms]).astype(np.float64)


def intersection_kernel(h1: LayerHistogram, h2: LayerHistogram) -> float:
    if h1.bins != h2.bins:
        raise ValidationError(f"bin mismatch: {h1.bins} vs {h2.bins}")
    return float(np.minimum(h1.counts, h2.counts).sum())


def gram_matrix(histograms: Sequence[LayerHistogram]) -> np.ndarray:
    """N x N intersection Gram; symmetric PSD."""
    return gram_from_matrix(stack_histograms(histograms))


def gram_from_matrix(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    n = h.shape[0]
    gram = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        gram[i, i:] = np.minimum(h[i], h[i:]).sum(axis=1)
        gram[i:, i] = gram[i, i:]
    return gram


def cross_from_matrices(test_h: np.ndarray, train_h: np.ndarray) -> np.ndarray:
    test_h = np.asarray(test_h, dtype=np.float64)
    train_h = np.asarray(train_h, dtype=np.float64)
    if test_h.shape[1] != train_h.shape[1]:
        raise ValidationError("test/train histograms have mismatched bin counts")
    out = np.empty((test_h.shape[0], train_h.shape[0]), dtype=np.float64)
    for i in range(test_h.shape[0]):
        out[i] = np.minimum(train_h, test_h[i]).sum(axis=1)
    return out


@dataclass(frozen=True)
class IdealKernel:
    """Binary label-agreement target: 1 where two samples share a class."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


def ideal_matrix(labels: Sequence[int]) -> IdealKernel:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValidationError("labels must be non-empty")
    y = (labels[:, None] == labels[None, :]).astype(np.float64)
    return IdealKernel(matrix=y)


@dataclass(frozen=True)
class KernelSet:
    """L per-layer Grams with fusion weights on the probability simplex."""

    grams: tuple[np.ndarray, ...]
    weights: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        grams = tuple(np.asarray(g, dtype=np.float64) for g in self.grams)
        weights = np.asarray(self.weights, dtype=np.float64)
        labels = np.asarray(self.labels)
        if not grams:
            raise ValidationError("KernelSet needs at least one gram matrix")
        n = grams[0].shape[0]
        for idx, g in enumerate(grams):
            if g.shape != (n, n):
                raise ValidationError(f"gram {idx} has shape {g.shape}, expected ({n}, {n})")
            if np.abs(g - g.T).max() > SYMMETRY_TOL * max(1.0, np.abs(g).max()):
                raise ValidationError(f"gram {idx} is not symmetric")
            diag = np.diag(g)
            if np.any(g > diag[:, None] + SYMMETRY_TOL * max(1.0, np.abs(g).max())):
                raise ValidationError(f"gram {idx} has an off-diagonal entry above its row diagonal")
        if weights.shape != (len(grams),):
            raise ValidationError(f"{len(grams)} grams but {weights.shape} weights")
        if np.any(weights < -SIMPLEX_TOL) or abs(weights.sum() - 1.0) > SIMPLEX_TOL:
            raise ValidationError("weights must lie on the probability simplex")
        if labels.shape != (n,):
            raise ValidationError(f"expected {n} labels, got shape {labels.shape}")
        object.__setattr__(self, "grams", grams)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "labels", labels)

    @property
    def num_layers(self) -> int:
        return len(self.grams)


def fuse_kernels(kset: KernelSet) -> np.ndarray:
    """Weighted sum of the per-layer Grams; PSD because the weights are convex."""
    return fuse_grams(kset.grams, kset.weights)


def fuse_grams(grams: Sequence[np.ndarray], weights: np.ndarray) -> np.ndarray:
    grams = [np.asarray(g, dtype=np.float64) for g in grams]
    weights = np.asarray(weights, dtype=np.float64)
    if len(grams) != weights.shape[0]:
        raise ValidationError(f"{len(grams)} grams but {weights.shape[0]} weights")
    fused = np.zeros_like(grams[0])
    for w, g in zip(weights, grams):
        fused += w * g
    return fused


def cross_gram(
    train_hists: Sequence[Sequence[LayerHistogram]],
    test_hists: Sequence[Sequence[LayerHistogram]],
    weights: np.ndarray,
) -> np.ndarray:
    """Fused M x N intersection kernel between test and training images.

    train_hists and test_hists hold one histogram list per layer, encoded
    with the same codebooks on both sides.
    """
    if len(train_hists) != len(test_hists):
        raise ValidationError("train/test layer counts differ")
    weights = np.asarray(weights, dtype=np.float64)
    if len(train_hists) != weights.shape[0]:
        raise ValidationError(f"{len(train_hists)} layers but {weights.shape[0]} weights")
    fused = None
    for w, train_layer, test_layer in zip(weights, train_hists, test_hists):
        block = cross_from_matrices(stack_histograms(test_layer), stack_histograms(train_layer))
        fused = w * block if fused is None else fused + w * block
    return fused


def trace_normalize(gram: np.ndarray) -> tuple[np.ndarray, float]:
    """Rescale so the trace equals N; returns the matrix and the factor used.

    Apply the same factor to cross-kernel rows computed against the
    training histograms this gram came from.
    """
    gram = np.asarray(gram, dtype=np.float64)
    trace = float(np.trace(gram))
    if trace <= 0.0:
        raise ValidationError("cannot trace-normalize a gram with non-positive trace")
    factor = gram.shape[0] / trace
    return gram * factor, factor
