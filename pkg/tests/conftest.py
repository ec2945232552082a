import numpy as np
import pytest

from adpm.tensor_store import FeatureMap, ImageRecord


def make_map(values) -> FeatureMap:
    return FeatureMap(values=np.asarray(values, dtype=np.float32))


def random_map(rng: np.random.Generator, side: int, channels: int, scale: float = 1.0) -> FeatureMap:
    return make_map(rng.normal(0.0, scale, size=(side, side, channels)))


def make_record(image_id: str, label: int, maps, scale_tag: str = "base") -> ImageRecord:
    return ImageRecord(image_id=image_id, label=label, scale_tag=scale_tag, layer_maps=tuple(maps))


def intersection_gram_oracle(rows_a, rows_b) -> np.ndarray:
    """Double-loop min-sum kernel, independent of the library's vectorized path."""
    out = np.zeros((len(rows_a), len(rows_b)))
    for i, a in enumerate(rows_a):
        for j, b in enumerate(rows_b):
            out[i, j] = sum(min(float(x), float(y)) for x, y in zip(a, b))
    return out


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
