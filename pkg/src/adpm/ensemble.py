"""Majority voting over per-scale classifier outputs.

Each scale's pipeline votes with one predicted class and a confidence (its
summed one-vs-one winning margin). Ties on vote counts fall back to the
larger summed confidence among the tied classes, then to the lowest class
index, so the fold is total and order-independent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

from .errors import ValidationError
from .tensor_store import ImageRecord


@dataclass(frozen=True)
class ScalePrediction:
    scale_tag: str
    predicted: int
    confidence: float


class ScalePredictor(Protocol):
    """Anything that can turn one record into a ScalePrediction (one per scale)."""

    def predict_record(self, record: ImageRecord) -> ScalePrediction: ...


def vote(predictions: Sequence[ScalePrediction], num_classes: int) -> int:
    if not predictions:
        raise ValidationError("cannot vote over an empty prediction list")
    counts = [0] * num_classes
    confidence = [0.0] * num_classes
    for p in predictions:
        if not 0 <= p.predicted < num_classes:
            raise ValidationError(f"prediction {p.predicted} outside [0, {num_classes})")
        counts[p.predicted] += 1
        confidence[p.predicted] += p.confidence
    top = max(counts)
    tied = [c for c in range(num_classes) if counts[c] == top]
    if len(tied) == 1:
        return tied[0]
    best_conf = max(confidence[c] for c in tied)
    return min(c for c in tied if confidence[c] == best_conf)


def predict_multiscale(
    predictors: Mapping[str, ScalePredictor],
    record_by_scale: Mapping[str, ImageRecord],
    num_classes: int,
) -> tuple[int, list[ScalePrediction]]:
    """Run every scale's pipeline on its record and vote; missing scales only warn.

    Records must belong to the same image (matching image_id).
    """
    if not predictors:
        raise ValidationError("no scale predictors provided")
    ids = {r.image_id for r in record_by_scale.values()}
    if len(ids) > 1:
        raise ValidationError(f"records from different images passed to one vote: {sorted(ids)}")
    breakdown: list[ScalePrediction] = []
    for tag in sorted(predictors):
        record = record_by_scale.get(tag)
        if record is None:
            warnings.warn(f"scale {tag!r} has no record for image {sorted(ids)}; voting without it")
            continue
        breakdown.append(predictors[tag].predict_record(record))
    if not breakdown:
        raise ValidationError("no scale produced a prediction")
    return vote(breakdown, num_classes), breakdown
