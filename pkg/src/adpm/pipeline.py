"""Train / predict / cross-validation orchestration and metrics reporting.

One ScaleModel per input scale: per-layer codebooks fitted on the training
split, per-layer intersection Grams, alignment weights from the simplex QP,
and a one-vs-one SVM on the fused kernel. Multi-scale prediction votes over
the per-scale outputs. Reports are deterministic under a fixed seed; stage
wall-clock goes to a separate sidecar so report bytes stay reproducible.
"""

from __future__ import annotations

import os
import time
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import codebook as cb
from . import kernels, simplex_qp, spp, svm
from .config import RunConfig
from .ensemble import ScalePrediction, vote
from .errors import ValidationError
from .tensor_store import (
    DatasetManifest,
    FeatureMap,
    ImageRecord,
    load_manifest,
    read_tensor_file,
    write_tensor_file,
)

THREADS_ENV = "ADPM_THREADS"


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class ClassificationMetrics:
    confusion: np.ndarray  # (C, C) int64, rows are true classes

    def __post_init__(self):
        m = np.asarray(self.confusion, dtype=np.int64)
        m.setflags(write=False)
        object.__setattr__(self, "confusion", m)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def overall(self) -> float:
        return float(np.trace(self.confusion)) / self.total

    @property
    def per_class(self) -> np.ndarray:
        rows = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore"):
            return np.where(rows > 0, np.diag(self.confusion) / np.maximum(rows, 1), np.nan)


def report_metrics(truth: Sequence[int], predicted: Sequence[int], num_classes: int) -> ClassificationMetrics:
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise ValidationError(f"truth and predictions differ in length: {truth.shape} vs {predicted.shape}")
    if truth.size == 0:
        raise ValidationError("cannot score an empty prediction set")
    for name, arr in (("truth", truth), ("prediction", predicted)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise ValidationError(f"{name} labels outside [0, {num_classes})")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (truth, predicted), 1)
    return ClassificationMetrics(confusion=confusion)


# ---------------------------------------------------------------------------
# per-scale model


@dataclass(frozen=True)
class ScaleModel:
    scale_tag: str
    layer_names: tuple[str, ...]
    encoder: str
    codebooks: tuple[cb.Codebook, ...]  # empty when encoder == "spp"
    spp_levels: tuple[int, ...]
    train_features: tuple[np.ndarray, ...]  # per layer, (N, D) float64 at f32 precision
    train_labels: np.ndarray
    weights: np.ndarray
    trace_factors: tuple[float, ...]
    ovo: svm.OvoModel
    num_classes: int
    normalize_histograms: bool

    def __post_init__(self):
        feats = tuple(
            np.asarray(f).astype(np.float32).astype(np.float64) for f in self.train_features
        )
        for f in feats:
            f.setflags(write=False)
        object.__setattr__(self, "train_features", feats)
        labels = np.asarray(self.train_labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "train_labels", labels)
        w = np.asarray(self.weights, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def encode_record(self, record: ImageRecord) -> list[np.ndarray]:
        if len(record.layer_maps) != len(self.layer_names):
            raise ValidationError(
                f"record {record.image_id!r} has {len(record.layer_maps)} layers, "
                f"model expects {len(self.layer_names)}"
            )
        vectors = []
        for layer_idx, fmap in enumerate(record.layer_maps):
            vectors.append(_encode_map(fmap, self, layer_idx))
        return vectors

    def cross_kernel(self, records: Sequence[ImageRecord]) -> np.ndarray:
        """Fused M x N intersection kernel against the stored training features."""
        encoded = [self.encode_record(r) for r in records]
        fused = np.zeros((len(records), self.train_labels.shape[0]))
        for layer_idx in range(len(self.layer_names)):
            test_mat = np.stack([encoded[i][layer_idx] for i in range(len(records))])
            block = kernels.cross_from_matrices(test_mat, self.train_features[layer_idx])
            fused += self.weights[layer_idx] * self.trace_factors[layer_idx] * block
        return fused

    def predict_records(self, records: Sequence[ImageRecord]) -> tuple[np.ndarray, np.ndarray]:
        """Predicted labels and the winning-class margin per record."""
        if not records:
            raise ValidationError("no records to predict")
        fused = self.cross_kernel(records)
        predicted, _, margins = svm.predict_ovo_detailed(self.ovo, fused)
        return predicted, margins[np.arange(len(records)), predicted]

    def predict_record(self, record: ImageRecord) -> ScalePrediction:
        predicted, confidence = self.predict_records([record])
        return ScalePrediction(
            scale_tag=self.scale_tag, predicted=int(predicted[0]), confidence=float(confidence[0])
        )


def _encode_map(fmap: FeatureMap, model: ScaleModel, layer_idx: int) -> np.ndarray:
    if model.encoder == "spp":
        vec = spp.spp_descriptor(fmap, spp.SppConfig(levels=model.spp_levels))
    else:
        hist = cb.encode_histogram(fmap, model.codebooks[layer_idx])
        vec = hist.counts.astype(np.float64)
    if model.normalize_histograms:
        total = vec.sum()
        if total <= 0:
            raise ValidationError("cannot normalize an all-zero feature vector")
        vec = vec / total
    return vec


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def train_scale_model(
    records: Sequence[ImageRecord],
    layer_names: Sequence[str],
    num_classes: int,
    cfg: RunConfig,
    scale_tag: str,
    split_seed: int = 0,
) -> tuple[ScaleModel, simplex_qp.WeightSolution]:
    """Full training pass for one scale on one training split."""
    if not records:
        raise ValidationError(f"scale {scale_tag!r}: no training records")
    labels = np.array([r.label for r in records], dtype=np.int64)
    num_layers = len(layer_names)
    scale_seed = _derive_seed(cfg.seed, split_seed, zlib.crc32(scale_tag.encode("utf-8")))

    books: list[cb.Codebook] = []
    features: list[np.ndarray] = []
    for layer_idx in range(num_layers):
        if cfg.encoder == "spp":
            mat = np.stack(
                [spp.spp_descriptor(r.layer_maps[layer_idx], spp.SppConfig(cfg.spp_levels)) for r in records]
            )
        else:
            descriptors = cb.collect_descriptors(
                records, layer_idx, cap=cfg.descriptor_cap, seed=scale_seed, min_rows=cfg.codebook_size
            )
            book = cb.train_codebook(descriptors, cfg.codebook_size, seed=scale_seed, layer_index=layer_idx)
            books.append(book)
            mat = np.stack(
                [cb.encode_histogram(r.layer_maps[layer_idx], book).counts.astype(np.float64) for r in records]
            )
        if cfg.normalize_histograms:
            mat = mat / mat.sum(axis=1, keepdims=True)
        features.append(mat.astype(np.float32).astype(np.float64))

    grams = []
    factors = []
    for mat in features:
        gram = kernels.gram_from_matrix(mat)
        if cfg.trace_normalize:
            gram, factor = kernels.trace_normalize(gram)
        else:
            factor = 1.0
        grams.append(gram)
        factors.append(factor)

    solution = simplex_qp.learn_weights(grams, labels, lam=cfg.lam)
    fused = kernels.fuse_grams(grams, solution.weights)
    ovo = svm.train_ovo(fused, labels, C=cfg.svm_c, tol=cfg.svm_tol, num_classes=num_classes)

    model = ScaleModel(
        scale_tag=scale_tag,
        layer_names=tuple(layer_names),
        encoder=cfg.encoder,
        codebooks=tuple(books),
        spp_levels=tuple(cfg.spp_levels),
        train_features=tuple(features),
        train_labels=labels,
        weights=solution.weights,
        trace_factors=tuple(factors),
        ovo=ovo,
        num_classes=num_classes,
        normalize_histograms=cfg.normalize_histograms,
    )
    return model, solution


# ---------------------------------------------------------------------------
# multi-scale dataset handling


@dataclass(frozen=True)
class ScaleDataset:
    scale_tag: str
    manifest: DatasetManifest
    by_id: dict[str, ImageRecord]


def load_scale_datasets(cfg: RunConfig) -> tuple[dict[str, ScaleDataset], dict[str, int], int]:
    """Load every configured manifest and align labels across scales by image_id."""
    datasets: dict[str, ScaleDataset] = {}
    labels_by_id: dict[str, int] = {}
    num_classes = 0
    for tag in cfg.active_scales():
        manifest = load_manifest(cfg.manifests[tag])
        num_classes = max(num_classes, manifest.num_classes)
        by_id: dict[str, ImageRecord] = {}
        for record in manifest.records:
            if record.scale_tag != tag and len(manifest.scale_tags()) > 1:
                continue  # mixed-scale manifest: keep only this scale's rows
            if record.image_id in by_id:
                raise ValidationError(f"scale {tag!r}: duplicate image_id {record.image_id!r}")
            by_id[record.image_id] = record
            known = labels_by_id.get(record.image_id)
            if known is not None and known != record.label:
                raise ValidationError(
                    f"image {record.image_id!r} labeled {known} at one scale, {record.label} at {tag!r}"
                )
            labels_by_id[record.image_id] = record.label
        datasets[tag] = ScaleDataset(scale_tag=tag, manifest=manifest, by_id=by_id)
    return datasets, labels_by_id, num_classes


def stratified_splits(
    labels_by_id: Mapping[str, int], cfg: RunConfig
) -> list[tuple[int, int, tuple[str, ...], tuple[str, ...]]]:
    """(repeat, fold, train_ids, test_ids) tuples, deterministic in the seed."""
    ids_by_class: dict[int, list[str]] = {}
    for image_id in sorted(labels_by_id):
        ids_by_class.setdefault(labels_by_id[image_id], []).append(image_id)

    splits = []
    for repeat in range(cfg.repeats):
        rng = np.random.default_rng([cfg.seed, repeat, 7919])
        shuffled = {
            label: [ids[i] for i in rng.permutation(len(ids))] for label, ids in sorted(ids_by_class.items())
        }
        if cfg.folds >= 2:
            for label, ids in shuffled.items():
                if len(ids) < cfg.folds:
                    raise ValidationError(
                        f"class {label} has {len(ids)} samples, fewer than {cfg.folds} folds"
                    )
            for fold in range(cfg.folds):
                train: list[str] = []
                test: list[str] = []
                for ids in shuffled.values():
                    chunks = np.array_split(np.array(ids, dtype=object), cfg.folds)
                    for f, chunk in enumerate(chunks):
                        (test if f == fold else train).extend(chunk.tolist())
                splits.append((repeat, fold, tuple(sorted(train)), tuple(sorted(test))))
        else:
            train, test = [], []
            for label, ids in shuffled.items():
                if len(ids) < 2:
                    raise ValidationError(f"class {label} has {len(ids)} sample(s); need >= 2 to split")
                n_train = int(round(cfg.split_fraction * len(ids)))
                n_train = min(max(n_train, 1), len(ids) - 1)
                train.extend(ids[:n_train])
                test.extend(ids[n_train:])
            splits.append((repeat, 0, tuple(sorted(train)), tuple(sorted(test))))
    return splits


# ---------------------------------------------------------------------------
# run records and reports


@dataclass(frozen=True)
class PredictionRow:
    image_id: str
    true_label: int
    per_scale: tuple[tuple[str, int], ...]
    predicted: int


@dataclass(frozen=True)
class ScaleOutcome:
    scale_tag: str
    layer_names: tuple[str, ...]
    weights: tuple[float, ...]
    accuracy: float


@dataclass(frozen=True)
class SplitResult:
    repeat: int
    fold: int
    metrics: ClassificationMetrics
    scale_outcomes: tuple[ScaleOutcome, ...]
    rows: tuple[PredictionRow, ...]


@dataclass(frozen=True)
class MetricsReport:
    protocol: str
    num_classes: int
    splits: tuple[SplitResult, ...]
    timings: dict[str, float] = field(default_factory=dict, compare=False)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([s.metrics.overall for s in self.splits])

    @property
    def mean_accuracy(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std_accuracy(self) -> float:
        return float(self.accuracies.std())

    @property
    def aggregate(self) -> ClassificationMetrics:
        total = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
        for s in self.splits:
            total += s.metrics.confusion
        return ClassificationMetrics(confusion=total)


def render_report(report: MetricsReport) -> str:
    """Human-readable report; deterministic given the run seed (no wall clock)."""
    lines = [
        "== adpm run report ==",
        f"protocol: {report.protocol}",
        f"classes: {report.num_classes}",
        f"splits: {len(report.splits)}",
        f"overall accuracy: mean={report.mean_accuracy:.6f} std={report.std_accuracy:.6f}",
        "",
    ]
    for s in report.splits:
        lines.append(f"[repeat {s.repeat} fold {s.fold}] accuracy={s.metrics.overall:.6f}")
        for outcome in s.scale_outcomes:
            weight_text = " ".join(f"{w:.12g}" for w in outcome.weights)
            lines.append(
                f"  scale {outcome.scale_tag}: accuracy={outcome.accuracy:.6f} weights=[{weight_text}]"
            )
    agg = report.aggregate
    lines.append("")
    lines.append("per-class accuracy (aggregated):")
    for c, acc in enumerate(agg.per_class):
        text = "n/a" if np.isnan(acc) else f"{acc:.6f}"
        lines.append(f"  class {c}: {text}")
    lines.append("")
    lines.append("confusion matrix (rows = truth, aggregated):")
    for row in agg.confusion:
        lines.append("  " + " ".join(f"{int(v):6d}" for v in row))
    return "\n".join(lines) + "\n"


def render_machine_report(report: MetricsReport) -> str:
    """Line-oriented records for downstream tooling; same determinism contract."""
    lines = [f"protocol\t{report.protocol}", f"num_classes\t{report.num_classes}"]
    for s in report.splits:
        lines.append(f"split\t{s.repeat}\t{s.fold}\t{s.metrics.overall!r}")
        for outcome in s.scale_outcomes:
            weight_text = "\t".join(f"{w:.12g}" for w in outcome.weights)
            lines.append(f"weights\t{s.repeat}\t{s.fold}\t{outcome.scale_tag}\t{weight_text}")
            lines.append(f"scale_accuracy\t{s.repeat}\t{s.fold}\t{outcome.scale_tag}\t{outcome.accuracy!r}")
        for row in s.rows:
            per_scale = "\t".join(f"{tag}:{pred}" for tag, pred in row.per_scale)
            lines.append(
                f"prediction\t{s.repeat}\t{s.fold}\t{row.image_id}\t{row.true_label}\t{row.predicted}\t{per_scale}"
            )
    lines.append(f"mean_accuracy\t{report.mean_accuracy!r}")
    lines.append(f"std_accuracy\t{report.std_accuracy!r}")
    agg = report.aggregate
    for c in range(report.num_classes):
        acc = agg.per_class[c]
        lines.append(f"class_accuracy\t{c}\t{'nan' if np.isnan(acc) else repr(float(acc))}")
    for r in range(report.num_classes):
        lines.append("confusion\t" + str(r) + "\t" + "\t".join(str(int(v)) for v in agg.confusion[r]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# trained bundles


@dataclass(frozen=True)
class TrainedBundle:
    scales: dict[str, ScaleModel]
    num_classes: int
    cfg: RunConfig
    solutions: dict[str, simplex_qp.WeightSolution] = field(default_factory=dict, compare=False)


def run_train(cfg: RunConfig, output_dir: str | Path | None = None) -> TrainedBundle:
    """Train one model per active scale on the full manifests and serialize it."""
    datasets, _, num_classes = load_scale_datasets(cfg)
    scales: dict[str, ScaleModel] = {}
    solutions: dict[str, simplex_qp.WeightSolution] = {}
    for tag, dataset in sorted(datasets.items()):
        records = [dataset.by_id[i] for i in sorted(dataset.by_id)]
        model, solution = train_scale_model(
            records, dataset.manifest.layer_names, num_classes, cfg, scale_tag=tag
        )
        scales[tag] = model
        solutions[tag] = solution
    bundle = TrainedBundle(scales=scales, num_classes=num_classes, cfg=cfg, solutions=solutions)
    target = output_dir if output_dir is not None else cfg.output_dir
    if target is not None:
        save_bundle(bundle, target)
    return bundle


def run_predict(
    bundle: TrainedBundle, manifests: Mapping[str, str | Path | DatasetManifest]
) -> tuple[MetricsReport, list[PredictionRow]]:
    """Score aligned test manifests with a trained bundle."""
    loaded: dict[str, DatasetManifest] = {}
    for tag, source in manifests.items():
        if tag not in bundle.scales:
            raise ValidationError(f"bundle has no model for scale {tag!r}")
        loaded[tag] = source if isinstance(source, DatasetManifest) else load_manifest(source)

    labels_by_id: dict[str, int] = {}
    by_scale: dict[str, dict[str, ImageRecord]] = {}
    for tag, manifest in loaded.items():
        by_scale[tag] = {}
        for record in manifest.records:
            by_scale[tag][record.image_id] = record
            known = labels_by_id.get(record.image_id)
            if known is not None and known != record.label:
                raise ValidationError(f"image {record.image_id!r} has conflicting labels across scales")
            labels_by_id[record.image_id] = record.label
    image_ids = sorted(labels_by_id)
    if not image_ids:
        raise ValidationError("no test records to predict")

    records_by_scale = {
        tag: [mapping[i] for i in image_ids if i in mapping] for tag, mapping in by_scale.items()
    }
    for tag, records in records_by_scale.items():
        if len(records) != len(image_ids):
            missing = sorted(set(image_ids) - set(by_scale[tag]))
            warnings.warn(f"scale {tag!r} is missing {len(missing)} records (e.g. {missing[:3]})")

    # scales with complete coverage predict in one batch; partial scales vote image by image
    complete = {t: r for t, r in records_by_scale.items() if len(r) == len(image_ids)}
    final, rows, per_scale_pred = _predict_with_partial(bundle, complete, by_scale, image_ids)

    truth = np.array([labels_by_id[i] for i in image_ids], dtype=np.int64)
    metrics = report_metrics(truth, final, bundle.num_classes)
    outcomes = []
    for tag in sorted(bundle.scales):
        if tag not in per_scale_pred or len(per_scale_pred[tag]) != len(image_ids):
            continue
        scale_metrics = report_metrics(truth, per_scale_pred[tag], bundle.num_classes)
        model = bundle.scales[tag]
        outcomes.append(
            ScaleOutcome(
                scale_tag=tag,
                layer_names=model.layer_names,
                weights=tuple(float(w) for w in model.weights),
                accuracy=scale_metrics.overall,
            )
        )
    rows = [
        PredictionRow(r.image_id, int(labels_by_id[r.image_id]), r.per_scale, r.predicted) for r in rows
    ]
    report = MetricsReport(
        protocol="predict",
        num_classes=bundle.num_classes,
        splits=(SplitResult(repeat=0, fold=0, metrics=metrics, scale_outcomes=tuple(outcomes), rows=tuple(rows)),),
    )
    return report, rows


def _predict_with_partial(
    bundle: TrainedBundle,
    complete: Mapping[str, Sequence[ImageRecord]],
    by_scale: Mapping[str, Mapping[str, ImageRecord]],
    image_ids: Sequence[str],
) -> tuple[np.ndarray, list[PredictionRow], dict[str, np.ndarray]]:
    per_scale_pred: dict[str, np.ndarray] = {}
    per_scale_conf: dict[str, np.ndarray] = {}
    for tag, records in sorted(complete.items()):
        predicted, confidence = bundle.scales[tag].predict_records(records)
        per_scale_pred[tag] = predicted
        per_scale_conf[tag] = confidence

    partial_tags = [t for t in sorted(by_scale) if t not in complete and t in bundle.scales]
    final = np.empty(len(image_ids), dtype=np.int64)
    rows: list[PredictionRow] = []
    for i, image_id in enumerate(image_ids):
        preds = [
            ScalePrediction(tag, int(per_scale_pred[tag][i]), float(per_scale_conf[tag][i]))
            for tag in sorted(per_scale_pred)
        ]
        for tag in partial_tags:
            record = by_scale[tag].get(image_id)
            if record is not None:
                preds.append(bundle.scales[tag].predict_record(record))
        preds.sort(key=lambda p: p.scale_tag)
        if not preds:
            raise ValidationError(f"image {image_id!r} has no records at any bundle scale")
        final[i] = vote(preds, bundle.num_classes)
        rows.append(
            PredictionRow(
                image_id=image_id,
                true_label=-1,
                per_scale=tuple((p.scale_tag, p.predicted) for p in preds),
                predicted=int(final[i]),
            )
        )
    return final, rows, per_scale_pred


def run_crossval(cfg: RunConfig, output_dir: str | Path | None = None) -> MetricsReport:
    """Repeated stratified splits (or k-fold) end to end, aggregated deterministically."""
    start = time.perf_counter()
    datasets, labels_by_id, num_classes = load_scale_datasets(cfg)
    for tag, dataset in datasets.items():
        missing = sorted(set(labels_by_id) - set(dataset.by_id))
        if missing:
            raise ValidationError(
                f"scale {tag!r} is missing records for {len(missing)} image ids (e.g. {missing[:3]})"
            )
    splits = stratified_splits(labels_by_id, cfg)
    load_seconds = time.perf_counter() - start

    def run_split(task):
        repeat, fold, train_ids, test_ids = task
        split_seed = _derive_seed(cfg.seed, repeat, fold)
        models: dict[str, ScaleModel] = {}
        outcomes = []
        truth = np.array([labels_by_id[i] for i in test_ids], dtype=np.int64)
        per_scale_pred: dict[str, np.ndarray] = {}
        per_scale_conf: dict[str, np.ndarray] = {}
        for tag in sorted(datasets):
            dataset = datasets[tag]
            train_records = [dataset.by_id[i] for i in train_ids]
            model, _ = train_scale_model(
                train_records,
                dataset.manifest.layer_names,
                num_classes,
                cfg,
                scale_tag=tag,
                split_seed=split_seed,
            )
            models[tag] = model
            test_records = [dataset.by_id[i] for i in test_ids]
            predicted, confidence = model.predict_records(test_records)
            per_scale_pred[tag] = predicted
            per_scale_conf[tag] = confidence
            outcomes.append(
                ScaleOutcome(
                    scale_tag=tag,
                    layer_names=model.layer_names,
                    weights=tuple(float(w) for w in model.weights),
                    accuracy=report_metrics(truth, predicted, num_classes).overall,
                )
            )
        final = np.empty(len(test_ids), dtype=np.int64)
        rows = []
        for i, image_id in enumerate(test_ids):
            preds = [
                ScalePrediction(tag, int(per_scale_pred[tag][i]), float(per_scale_conf[tag][i]))
                for tag in sorted(per_scale_pred)
            ]
            final[i] = vote(preds, num_classes)
            rows.append(
                PredictionRow(
                    image_id=image_id,
                    true_label=int(truth[i]),
                    per_scale=tuple((p.scale_tag, p.predicted) for p in preds),
                    predicted=int(final[i]),
                )
            )
        metrics = report_metrics(truth, final, num_classes)
        return SplitResult(
            repeat=repeat, fold=fold, metrics=metrics, scale_outcomes=tuple(outcomes), rows=tuple(rows)
        )

    workers = int(os.environ.get(THREADS_ENV, "1"))
    fit_start = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_split, splits))
    else:
        results = [run_split(task) for task in splits]
    fit_seconds = time.perf_counter() - fit_start

    results.sort(key=lambda s: (s.repeat, s.fold))
    protocol = (
        f"stratified {cfg.folds}-fold repeats={cfg.repeats}"
        if cfg.folds >= 2
        else f"repeated-split fraction={cfg.split_fraction} repeats={cfg.repeats}"
    )
    report = MetricsReport(
        protocol=protocol,
        num_classes=num_classes,
        splits=tuple(results),
        timings={"load_s": load_seconds, "fit_predict_s": fit_seconds},
    )
    target = output_dir if output_dir is not None else cfg.output_dir
    if target is not None:
        write_report_files(report, target)
    return report


def write_report_files(report: MetricsReport, out_dir: str | Path) -> None:
    """report.txt / report.tsv are seed-deterministic; wall clock goes to timings.txt."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(render_report(report), encoding="utf-8")
    (out / "report.tsv").write_text(render_machine_report(report), encoding="utf-8")
    timing_lines = [f"{k}\t{v:.3f}" for k, v in sorted(report.timings.items())]
    (out / "timings.txt").write_text("\n".join(timing_lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# bundle serialization


def save_bundle(bundle: TrainedBundle, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = bundle.cfg
    lines = [
        "adpm-bundle 1",
        f"num_classes\t{bundle.num_classes}",
        "scales\t" + "\t".join(sorted(bundle.scales)),
        f"encoder\t{cfg.encoder}",
        f"normalize_histograms\t{int(cfg.normalize_histograms)}",
        f"trace_normalize\t{int(cfg.trace_normalize)}",
        f"codebook_size\t{cfg.codebook_size}",
        f"lambda\t{cfg.lam!r}",
        f"svm_c\t{cfg.svm_c!r}",
        f"svm_tol\t{cfg.svm_tol!r}",
        f"seed\t{cfg.seed}",
        "spp_levels\t" + ",".join(str(n) for n in cfg.spp_levels),
    ]
    (out / "bundle.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for tag, model in sorted(bundle.scales.items()):
        scale_dir = out / f"scale_{tag}"
        scale_dir.mkdir(exist_ok=True)
        meta = [
            "layer_names\t" + "\t".join(model.layer_names),
            "weights\t" + "\t".join(repr(float(w)) for w in model.weights),
            "trace_factors\t" + "\t".join(repr(float(f)) for f in model.trace_factors),
            "labels\t" + "\t".join(str(int(v)) for v in model.train_labels),
        ]
        (scale_dir / "meta.txt").write_text("\n".join(meta) + "\n", encoding="utf-8")
        for layer_idx, name in enumerate(model.layer_names):
            mat = model.train_features[layer_idx].astype(np.float32)
            write_tensor_file(
                FeatureMap(values=mat.reshape(mat.shape[0], 1, mat.shape[1])),
                scale_dir / f"train_{name}.adpm",
            )
            if model.encoder == "bovw":
                cb.save_codebook(model.codebooks[layer_idx], scale_dir / f"codebook_{name}.adpm")
        for (a, b), pair in sorted(model.ovo.pairs.items()):
            svm.save_binary_model(pair.model, scale_dir / f"svm_{a}_vs_{b}.txt")
            np.savetxt(
                scale_dir / f"svm_{a}_vs_{b}.indices",
                pair.train_indices,
                fmt="%d",
            )


def load_bundle(path: str | Path) -> TrainedBundle:
    out = Path(path)
    header = (out / "bundle.txt").read_text(encoding="utf-8").splitlines()
    if not header or not header[0].startswith("adpm-bundle"):
        raise ValidationError(f"{out}: not a bundle directory")
    fields: dict[str, list[str]] = {}
    for line in header[1:]:
        parts = line.split("\t")
        if parts[0]:
            fields[parts[0]] = parts[1:]
    num_classes = int(fields["num_classes"][0])
    tags = fields["scales"]
    encoder = fields["encoder"][0]
    normalize = bool(int(fields["normalize_histograms"][0]))
    trace_norm = bool(int(fields["trace_normalize"][0]))
    spp_levels = tuple(int(n) for n in fields["spp_levels"][0].split(","))

    cfg = RunConfig(
        manifests={t: Path("unused") for t in tags},
        codebook_size=int(fields["codebook_size"][0]),
        lam=float(fields["lambda"][0]),
        svm_c=float(fields["svm_c"][0]),
        svm_tol=float(fields["svm_tol"][0]),
        seed=int(fields["seed"][0]),
        normalize_histograms=normalize,
        trace_normalize=trace_norm,
        encoder=encoder,
        spp_levels=spp_levels,
    )

    scales: dict[str, ScaleModel] = {}
    for tag in tags:
        scale_dir = out / f"scale_{tag}"
        meta: dict[str, list[str]] = {}
        for line in (scale_dir / "meta.txt").read_text(encoding="utf-8").splitlines():
            parts = line.split("\t")
            meta[parts[0]] = parts[1:]
        layer_names = tuple(meta["layer_names"])
        weights = np.array([float(v) for v in meta["weights"]])
        factors = tuple(float(v) for v in meta["trace_factors"])
        labels = np.array([int(v) for v in meta["labels"]], dtype=np.int64)
        features = []
        books = []
        for name in layer_names:
            fmap = read_tensor_file(scale_dir / f"train_{name}.adpm")
            features.append(fmap.values.reshape(fmap.height, fmap.channels).astype(np.float64))
            if encoder == "bovw":
                books.append(cb.load_codebook(scale_dir / f"codebook_{name}.adpm"))
        pairs: dict[tuple[int, int], svm.PairModel] = {}
        for model_path in sorted(scale_dir.glob("svm_*_vs_*.txt")):
            binary = svm.load_binary_model(model_path)
            idx = np.loadtxt(model_path.with_suffix(".indices"), dtype=np.int64, ndmin=1)
            pairs[binary.label_pair] = svm.PairModel(model=binary, train_indices=idx)
        ovo = svm.OvoModel(pairs=pairs, num_classes=num_classes, n_train=labels.shape[0])
        scales[tag] = ScaleModel(
            scale_tag=tag,
            layer_names=layer_names,
            encoder=encoder,
            codebooks=tuple(books),
            spp_levels=spp_levels,
            train_features=tuple(features),
            train_labels=labels,
            weights=weights,
            trace_factors=factors,
            ovo=ovo,
            num_classes=num_classes,
            normalize_histograms=normalize,
        )
    return TrainedBundle(scales=scales, num_classes=num_classes, cfg=cfg)
