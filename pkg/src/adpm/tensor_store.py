"""Binary tensor container and dataset manifest.

Container layout (little-endian throughout):

    magic "ADPM" | version u32 | reserved u32 (zero) | h, w, c as u64 | payload

The header is exactly 36 bytes; the payload is ``4*h*w*c`` bytes of f32 in
row-major grid order with the channel axis fastest-varying, so the descriptor
of grid cell (i, j) is a contiguous slice.

The manifest is a line-oriented UTF-8 text file. Lines starting with ``#``
are free-text comments (producers record e.g. which activation tap was used
there). The first non-comment line is the header: ``num_classes`` followed by
the L layer names, tab-separated. Every following line is one record:
``image_id  label  scale_tag  path_1 .. path_L`` (tab-separated, paths
relative to the manifest's directory).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

from .errors import FormatError, TensorIOError, ValidationError

MAGIC = b"ADPM"
FORMAT_VERSION = 1
HEADER_SIZE = 36

_HEADER = struct.Struct("<4sII3Q")
assert _HEADER.size == HEADER_SIZE


@dataclass(frozen=True)
class FeatureMap:
    """One conv layer's activations for one image: an h*w grid of c-dim descriptors."""

    values: np.ndarray  # shape (h, w, c), float32

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise ValidationError(f"feature map must be 3-dimensional, got shape {v.shape}")
        if min(v.shape) < 1:
            raise ValidationError(f"feature map dims must be positive, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("feature map contains non-finite values")
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def descriptors(self) -> np.ndarray:
        """All grid-cell descriptors as an (h*w, c) float64 matrix."""
        return self.values.reshape(-1, self.channels).astype(np.float64)


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    label: int
    scale_tag: str
    layer_maps: tuple[FeatureMap, ...]

    def __post_init__(self):
        if self.label < 0:
            raise ValidationError(f"record {self.image_id!r}: label must be >= 0")
        object.__setattr__(self, "layer_maps", tuple(self.layer_maps))


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[ImageRecord, ...]
    num_classes: int
    layer_names: tuple[str, ...]
    comments: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "layer_names", tuple(self.layer_names))
        object.__setattr__(self, "comments", tuple(self.comments))

    @property
    def num_layers(self) -> int:
        return len(self.layer_names)

    def scale_tags(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.scale_tag, None)
        return tuple(seen)


def write_tensor(fmap: FeatureMap, sink: BinaryIO) -> int:
    """Serialize one feature map; returns total bytes written (36 + 4*h*w*c)."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, 0, fmap.height, fmap.width, fmap.channels)
    written = 0
    try:
        sink.write(header)
        written += len(header)
        payload = fmap.values.astype("<f4", copy=False).tobytes()
        sink.write(payload)
        written += len(payload)
    except OSError as exc:
        raise TensorIOError(f"tensor write failed: {exc}", byte_offset=written) from exc
    return written


def write_tensor_file(fmap: FeatureMap, path: str | Path) -> int:
    with open(path, "wb") as fh:
        return write_tensor(fmap, fh)


def read_tensor(source: BinaryIO) -> FeatureMap:
    """Inverse of write_tensor: bit-exact round trip for any valid map."""
    raw = source.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise TensorIOError("truncated tensor header", byte_offset=len(raw))
    magic, version, _reserved, h, w, c = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    if min(h, w, c) < 1:
        raise FormatError(f"non-positive dims in header: {(h, w, c)}")
    expected = 4 * h * w * c
    payload = source.read(expected)
    if len(payload) < expected:
        raise TensorIOError(
            f"truncated payload: expected {expected} bytes, got {len(payload)}",
            byte_offset=HEADER_SIZE + len(payload),
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    if not np.all(np.isfinite(values)):
        raise ValidationError("tensor payload contains non-finite values")
    return FeatureMap(values=values)


def read_tensor_file(path: str | Path) -> FeatureMap:
    with open(path, "rb") as fh:
        return read_tensor(fh)


def _parse_header_line(line: str, path: Path) -> tuple[int, tuple[str, ...]]:
    fields = line.rstrip("\n").split("\t")
    if len(fields) < 2:
        raise ValidationError(f"{path}: manifest header needs num_classes and layer names")
    try:
        num_classes = int(fields[0])
    except ValueError as exc:
        raise ValidationError(f"{path}: bad num_classes field {fields[0]!r}") from exc
    if num_classes < 1:
        raise ValidationError(f"{path}: num_classes must be positive")
    layer_names = tuple(fields[1:])
    if len(set(layer_names)) != len(layer_names):
        raise ValidationError(f"{path}: duplicate layer names in header")
    return num_classes, layer_names


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and fully validate a manifest; raises rather than returning a partial result."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"manifest not found: {path}")
    base = path.parent
    lines = path.read_text(encoding="utf-8").splitlines()

    comments: list[str] = []
    header: tuple[int, tuple[str, ...]] | None = None
    records: list[ImageRecord] = []
    # per scale_tag, per layer: the (h, w, c) every record must match
    shapes: dict[str, list[tuple[int, int, int]]] = {}

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.lstrip().startswith("#"):
            comments.append(line.lstrip()[1:].strip())
            continue
        if header is None:
            header = _parse_header_line(line, path)
            continue
        num_classes, layer_names = header
        fields = line.rstrip("\n").split("\t")
        if len(fields) != 3 + len(layer_names):
            raise ValidationError(
                f"{path}:{lineno}: record {fields[0]!r} lists {len(fields) - 3} layer paths, "
                f"expected {len(layer_names)}"
            )
        image_id, label_text, scale_tag = fields[0], fields[1], fields[2]
        try:
            label = int(label_text)
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: record {image_id!r} has bad label {label_text!r}") from exc
        if not 0 <= label < num_classes:
            raise ValidationError(
                f"{path}:{lineno}: record {image_id!r} has label {label} outside [0, {num_classes})"
            )
        maps = []
        for layer_idx, rel in enumerate(fields[3:]):
            tensor_path = base / rel
            if not tensor_path.is_file():
                raise ValidationError(
                    f"{path}:{lineno}: record {image_id!r} references missing file {tensor_path}"
                )
            try:
                fmap = read_tensor_file(tensor_path)
            except (FormatError, TensorIOError, ValidationError) as exc:
                raise ValidationError(
                    f"{path}:{lineno}: record {image_id!r} layer {layer_names[layer_idx]!r}: {exc}"
                ) from exc
            maps.append(fmap)
        shape_key = [(m.height, m.width, m.channels) for m in maps]
        known = shapes.setdefault(scale_tag, shape_key)
        if known != shape_key:
            raise ValidationError(
                f"{path}:{lineno}: record {image_id!r} layer shapes {shape_key} differ from "
                f"earlier records with scale_tag {scale_tag!r} ({known})"
            )
        records.append(ImageRecord(image_id=image_id, label=label, scale_tag=scale_tag, layer_maps=tuple(maps)))

    if header is None:
        raise ValidationError(f"{path}: manifest has no header line")
    if not records:
        raise ValidationError(f"{path}: manifest has no records")
    num_classes, layer_names = header
    return DatasetManifest(
        records=tuple(records), num_classes=num_classes, layer_names=layer_names, comments=tuple(comments)
    )


def write_manifest(
    path: str | Path,
    records: Iterable[tuple[str, int, str, list[str]]],
    num_classes: int,
    layer_names: Iterable[str],
    comments: Iterable[str] = (),
) -> None:
    """Emit the text format; record paths are taken verbatim (keep them relative)."""
    path = Path(path)
    layer_names = list(layer_names)
    lines = [f"# {c}" for c in comments]
    lines.append("\t".join([str(num_classes)] + layer_names))
    for image_id, label, scale_tag, paths in records:
        if len(paths) != len(layer_names):
            raise ValidationError(
                f"record {image_id!r} has {len(paths)} paths for {len(layer_names)} layers"
            )
        lines.append("\t".join([image_id, str(label), scale_tag] + list(paths)))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def validate_dataset(manifest: DatasetManifest) -> list[str]:
    """Reporting-only quality pass: returns warnings, never mutates or raises."""
    warnings: list[str] = []

    counts: dict[int, int] = {}
    for r in manifest.records:
        counts[r.label] = counts.get(r.label, 0) + 1
    if counts:
        largest, smallest = max(counts.values()), min(counts.values())
        if largest >= 2 * smallest:
            warnings.append(
                f"class imbalance: largest class has {largest} records, smallest {smallest}"
            )

    seen: dict[tuple[str, str], str] = {}
    for r in manifest.records:
        key = (r.image_id, r.scale_tag)
        if key in seen:
            warnings.append(f"duplicate id: image_id {r.image_id!r} appears twice for scale {r.scale_tag!r}")
        seen[key] = r.image_id
        for layer_idx, fmap in enumerate(r.layer_maps):
            if fmap.values.size and float(fmap.values.min()) == float(fmap.values.max()):
                warnings.append(
                    f"constant map: record {r.image_id!r} layer "
                    f"{manifest.layer_names[layer_idx]!r} has a single value"
                )
    return warnings
