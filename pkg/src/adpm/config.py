"""Flat key=value run configuration.

The config file is plain text: one ``key = value`` per line, ``#`` comments,
no sections. Manifests are declared per scale as ``manifest.<scale_tag>``.
Relative paths resolve against ``workspace_root`` (default: the config
file's directory).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ValidationError

ENCODERS = ("bovw", "spp")


@dataclass(frozen=True)
class RunConfig:
    manifests: dict[str, Path] = field(default_factory=dict)
    codebook_size: int = 300
    lam: float = 0.5
    svm_c: float = 1.0
    svm_tol: float = 1e-3
    seed: int = 0
    split_fraction: float = 0.5
    folds: int = 0  # 0 means repeated random splits at split_fraction
    repeats: int = 10
    scales: tuple[str, ...] = ()  # empty means every configured scale
    normalize_histograms: bool = False
    trace_normalize: bool = False
    encoder: str = "bovw"
    descriptor_cap: int = 20000
    spp_levels: tuple[int, ...] = (1, 2, 4)
    output_dir: Path | None = None

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValidationError(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        if self.repeats < 1:
            raise ValidationError(f"repeats must be >= 1, got {self.repeats}")
        if self.folds < 0 or self.folds == 1:
            raise ValidationError(f"folds must be 0 (off) or >= 2, got {self.folds}")
        if self.codebook_size < 2:
            raise ValidationError(f"codebook_size must be >= 2, got {self.codebook_size}")
        if self.encoder not in ENCODERS:
            raise ValidationError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.lam < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        unknown = [s for s in self.scales if s not in self.manifests]
        if unknown:
            raise ValidationError(f"scales {unknown} have no manifest.<scale> entry")

    def active_scales(self) -> tuple[str, ...]:
        if self.scales:
            return tuple(self.scales)
        return tuple(sorted(self.manifests))


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_bool(key: str, value: str) -> bool:
    try:
        return _BOOL_WORDS[value.strip().lower()]
    except KeyError:
        raise ValidationError(f"{key}: expected a boolean, got {value!r}") from None


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    root = path.parent
    values: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValidationError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, value = stripped.split("=", 1)
        values[key.strip()] = value.strip()

    if "workspace_root" in values:
        declared = Path(values.pop("workspace_root"))
        root = declared if declared.is_absolute() else root / declared

    manifests: dict[str, Path] = {}
    for key in [k for k in values if k.startswith("manifest.")]:
        tag = key.split(".", 1)[1]
        raw = Path(values.pop(key))
        manifests[tag] = raw if raw.is_absolute() else root / raw

    cfg = RunConfig(manifests=manifests)
    try:
        if "codebook_size" in values:
            cfg = replace(cfg, codebook_size=int(values.pop("codebook_size")))
        if "lambda" in values:
            cfg = replace(cfg, lam=float(values.pop("lambda")))
        if "svm_c" in values:
            cfg = replace(cfg, svm_c=float(values.pop("svm_c")))
        if "svm_tol" in values:
            cfg = replace(cfg, svm_tol=float(values.pop("svm_tol")))
        if "seed" in values:
            cfg = replace(cfg, seed=int(values.pop("seed")))
        if "split_fraction" in values:
            cfg = replace(cfg, split_fraction=float(values.pop("split_fraction")))
        if "folds" in values:
            cfg = replace(cfg, folds=int(values.pop("folds")))
        if "repeats" in values:
            cfg = replace(cfg, repeats=int(values.pop("repeats")))
        if "scales" in values:
            tags = tuple(t.strip() for t in values.pop("scales").split(",") if t.strip())
            cfg = replace(cfg, scales=tags)
        if "normalize_histograms" in values:
            cfg = replace(cfg, normalize_histograms=_parse_bool("normalize_histograms", values.pop("normalize_histograms")))
        if "trace_normalize" in values:
            cfg = replace(cfg, trace_normalize=_parse_bool("trace_normalize", values.pop("trace_normalize")))
        if "encoder" in values:
            cfg = replace(cfg, encoder=values.pop("encoder"))
        if "descriptor_cap" in values:
            cfg = replace(cfg, descriptor_cap=int(values.pop("descriptor_cap")))
        if "spp_levels" in values:
            levels = tuple(int(t) for t in values.pop("spp_levels").split(",") if t.strip())
            cfg = replace(cfg, spp_levels=levels)
        if "output_dir" in values:
            raw = Path(values.pop("output_dir"))
            cfg = replace(cfg, output_dir=raw if raw.is_absolute() else root / raw)
    except ValueError as exc:
        raise ValidationError(f"{path}: bad config value: {exc}") from exc

    if values:
        raise ValidationError(f"{path}: unknown config keys: {sorted(values)}")
    if not cfg.manifests:
        raise ValidationError(f"{path}: no manifest.<scale> entries")
    return cfg


def render_config(cfg: RunConfig, relative_to: Path | None = None) -> str:
    """Inverse of parse_config, used by gen-synth to emit runnable workspaces."""

    def path_text(p: Path) -> str:
        if relative_to is not None:
            try:
                return p.relative_to(relative_to).as_posix()
            except ValueError:
                pass
        return str(p)

    lines = []
    for tag in sorted(cfg.manifests):
        lines.append(f"manifest.{tag} = {path_text(cfg.manifests[tag])}")
    lines += [
        f"codebook_size = {cfg.codebook_size}",
        f"lambda = {cfg.lam!r}",
        f"svm_c = {cfg.svm_c!r}",
        f"svm_tol = {cfg.svm_tol!r}",
        f"seed = {cfg.seed}",
        f"split_fraction = {cfg.split_fraction!r}",
        f"folds = {cfg.folds}",
        f"repeats = {cfg.repeats}",
        f"normalize_histograms = {str(cfg.normalize_histograms).lower()}",
        f"trace_normalize = {str(cfg.trace_normalize).lower()}",
        f"encoder = {cfg.encoder}",
        f"descriptor_cap = {cfg.descriptor_cap}",
        f"spp_levels = {','.join(str(n) for n in cfg.spp_levels)}",
    ]
    if cfg.scales:
        lines.append(f"scales = {','.join(cfg.scales)}")
    if cfg.output_dir is not None:
        lines.append(f"output_dir = {path_text(cfg.output_dir)}")
    return "\n".join(lines) + "\n"
