"""Spatial pyramid max-pooling over square feature maps.

A level with grid size n pools an a*a map through n*n windows of side
ceil(a/n) placed at stride floor(a/n). The last window per axis ends at a,
so every index is covered and no window leaves the map. Concatenating the
levels gives a vector whose length depends only on the channel count and
the level set, never on a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedSizeError, ValidationError
from .tensor_store import FeatureMap

DEFAULT_LEVELS = (1, 2, 4)


@dataclass(frozen=True)
class SppConfig:
    levels: tuple[int, ...] = DEFAULT_LEVELS

    def __post_init__(self):
        levels = tuple(int(n) for n in self.levels)
        if not levels:
            raise ValidationError("SppConfig needs at least one level")
        if levels[0] < 1 or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValidationError(f"levels must be >= 1 and strictly increasing, got {levels}")
        object.__setattr__(self, "levels", levels)

    @property
    def bins(self) -> int:
        return sum(n * n for n in self.levels)


@dataclass(frozen=True)
class SppGrid:
    n: int
    win: int
    stride: int

    def windows(self, a: int) -> list[tuple[int, int]]:
        """Half-open [start, end) per axis position; the last end is clamped to a."""
        spans = []
        for k in range(self.n):
            start = k * self.stride
            end = a if k == self.n - 1 else min(start + self.win, a)
            spans.append((start, end))
        return spans


def plan_grid(a: int, n: int) -> SppGrid:
    """Window/stride arithmetic for one pyramid level; requires a >= n >= 1."""
    if n < 1:
        raise ValidationError(f"grid size must be >= 1, got {n}")
    if a < n:
        raise UnsupportedSizeError(f"cannot pool a {a}x{a} map into a {n}x{n} grid (stride would be 0)")
    return SppGrid(n=n, win=math.ceil(a / n), stride=a // n)


def pool_level(fmap: FeatureMap, grid: SppGrid) -> np.ndarray:
    """Max-pool one level; output is region-major with channels fastest, length n*n*c."""
    if fmap.height != fmap.width:
        raise ValidationError(f"pooling expects square maps, got {fmap.height}x{fmap.width}")
    a = fmap.height
    if a < grid.n:
        raise ValidationError(f"map side {a} is smaller than grid size {grid.n}")
    values = fmap.values.astype(np.float64)
    spans = grid.windows(a)
    out = np.empty(grid.n * grid.n * fmap.channels, dtype=np.float64)
    pos = 0
    for r0, r1 in spans:
        for c0, c1 in spans:
            out[pos : pos + fmap.channels] = values[r0:r1, c0:c1, :].max(axis=(0, 1))
            pos += fmap.channels
    return out


def spp_descriptor(fmap: FeatureMap, cfg: SppConfig = SppConfig()) -> np.ndarray:
    """Concatenated multi-level pooling; fixed length cfg.bins * channels for any map side."""
    parts = [pool_level(fmap, plan_grid(fmap.height, n)) for n in cfg.levels]
    return np.concatenate(parts)
