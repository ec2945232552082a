"""Writer for the adpm tensor container and manifest text format.

Implemented here independently of the main package: the wire format is the
contract between the two. Container: magic "ADPM" | version u32 LE |
reserved u32 (zero) | h, w, c as u64 LE | f32 LE payload, row-major with
channels fastest. Manifest: '#' comments, a header line (num_classes then
layer names, tab-separated), then one tab-separated record per line.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable

import numpy as np

MAGIC = b"ADPM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII3Q")


def write_feature_map(values: np.ndarray, path: str | Path) -> int:
    """values is (h, w, c); returns bytes written."""
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 3:
        raise ValueError(f"expected a (h, w, c) array, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("activation tensor contains non-finite values")
    h, w, c = values.shape
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, 0, h, w, c)
    payload = values.tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    return len(header) + len(payload)


def write_manifest(
    path: str | Path,
    rows: Iterable[tuple[str, int, str, list[str]]],
    num_classes: int,
    layer_names: list[str],
    comments: Iterable[str] = (),
) -> None:
    lines = [f"# {c}" for c in comments]
    lines.append("\t".join([str(num_classes)] + list(layer_names)))
    for image_id, label, scale_tag, paths in rows:
        lines.append("\t".join([image_id, str(label), scale_tag] + list(paths)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
