"""Kernel SVMs on precomputed Gram matrices.

Binary training is a simplified sequential-minimal-optimization loop with
deterministic working-pair selection: the first index comes from a fixed
scan for KKT violators, the second maximizes |E_i - E_j| with an in-order
fallback when that step stalls. Multi-class is one-against-one: one binary
model per class pair on the pair's sub-Gram, prediction by voting.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import SkipPairError, ValidationError

DEFAULT_C = 1.0
DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 50
_EPS = 1e-12


@dataclass(frozen=True)
class BinarySvmModel:
    support_indices: np.ndarray  # rows of the training gram that stayed active
    alphas: np.ndarray           # dual coefficients, in (0, C]
    support_signs: np.ndarray    # +1 for label_pair[0], -1 for label_pair[1]
    bias: float
    label_pair: tuple[int, int]
    n_train: int
    C: float = DEFAULT_C

    def __post_init__(self):
        for name in ("support_indices", "alphas", "support_signs"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def full_alphas(self) -> np.ndarray:
        out = np.zeros(self.n_train)
        out[self.support_indices] = self.alphas
        return out

    def full_signs(self) -> np.ndarray:
        out = np.zeros(self.n_train)
        out[self.support_indices] = self.support_signs
        return out


def _kkt_violation(r: float, alpha: float, C: float, tol: float) -> bool:
    return (r < -tol and alpha < C) or (r > tol and alpha > 0)


def train_binary_smo(
    gram: np.ndarray,
    y: np.ndarray,
    C: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    label_pair: tuple[int, int] = (1, -1),
) -> BinarySvmModel:
    """Fit the dual on a precomputed kernel; y must be +/-1 with both classes present."""
    gram = np.asarray(gram, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if gram.shape != (n, n):
        raise ValidationError(f"gram shape {gram.shape} does not match {n} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValidationError("labels must be +1/-1")
    if np.all(y == y[0]):
        raise ValidationError("training set contains a single class")
    if C <= 0:
        raise ValidationError(f"C must be positive, got {C}")

    alpha = np.zeros(n)
    b = 0.0
    # cached decision values without bias: g = sum_j alpha_j y_j K[:, j]
    g = np.zeros(n)

    def take_step(i: int, j: int) -> bool:
        nonlocal b
        if i == j:
            return False
        ai, aj = alpha[i], alpha[j]
        yi, yj = y[i], y[j]
        Ei = g[i] + b - yi
        Ej = g[j] + b - yj
        s = yi * yj
        if s < 0:
            lo, hi = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            lo, hi = max(0.0, ai + aj - C), min(C, ai + aj)
        if hi - lo < _EPS * C:
            return False
        k11, k22, k12 = gram[i, i], gram[j, j], gram[i, j]
        eta = k11 + k22 - 2.0 * k12
        if eta > _EPS:
            aj_new = aj + yj * (Ei - Ej) / eta
            aj_new = min(max(aj_new, lo), hi)
        else:
            # flat direction: evaluate the dual at both box ends
            f1 = yi * (Ei - b) - ai * k11 - s * aj * k12
            f2 = yj * (Ej - b) - s * ai * k12 - aj * k22
            lo1 = ai + s * (aj - lo)
            hi1 = ai + s * (aj - hi)
            lo_obj = lo1 * f1 + lo * f2 + 0.5 * lo1 * lo1 * k11 + 0.5 * lo * lo * k22 + s * lo * lo1 * k12
            hi_obj = hi1 * f1 + hi * f2 + 0.5 * hi1 * hi1 * k11 + 0.5 * hi * hi * k22 + s * hi * hi1 * k12
            if lo_obj < hi_obj - _EPS:
                aj_new = lo
            elif lo_obj > hi_obj + _EPS:
                aj_new = hi
            else:
                return False
        # progress threshold in alpha units (scales with C so that scaling the
        # kernel by gamma and C by 1/gamma walks the identical trajectory)
        if abs(aj_new - aj) < tol * (aj_new + aj + tol * C):
            return False
        ai_new = ai + s * (aj - aj_new)
        # snap to the box so bound states are exact
        if ai_new < _EPS:
            ai_new = 0.0
        elif ai_new > C - _EPS:
            ai_new = C
        b1 = b - Ei - yi * (ai_new - ai) * k11 - yj * (aj_new - aj) * k12
        b2 = b - Ej - yi * (ai_new - ai) * k12 - yj * (aj_new - aj) * k22
        if 0.0 < ai_new < C:
            b = b1
        elif 0.0 < aj_new < C:
            b = b2
        else:
            b = 0.5 * (b1 + b2)
        g[:] += yi * (ai_new - ai) * gram[:, i] + yj * (aj_new - aj) * gram[:, j]
        alpha[i], alpha[j] = ai_new, aj_new
        return True

    passes = 0
    # hard cap so overlapping classes cannot spin the violator scan forever;
    # any exit still returns a dual-feasible model
    for _ in range(1000 * max(1, max_passes)):
        if passes >= max_passes:
            break
        num_changed = 0
        for i in range(n):
            Ei = g[i] + b - y[i]
            if not _kkt_violation(Ei * y[i], alpha[i], C, tol):
                continue
            errors = g + b - y
            gaps = np.abs(Ei - errors)
            gaps[i] = -1.0
            j = int(np.argmax(gaps))
            if take_step(i, j):
                num_changed += 1
                continue
            for j in range(n):
                if j != i and take_step(i, j):
                    num_changed += 1
                    break
        if num_changed == 0:
            passes += 1
        else:
            passes = 0

    # final bias: average over unbounded support vectors, else the midpoint
    # of the interval the KKT conditions leave open
    unbounded = np.nonzero((alpha > _EPS) & (alpha < C - _EPS))[0]
    if unbounded.size:
        b = float(np.mean(y[unbounded] - g[unbounded]))
    else:
        lows, highs = [], []
        for i in range(n):
            bound = y[i] - g[i]
            at_zero = alpha[i] <= _EPS
            if (at_zero and y[i] > 0) or (not at_zero and y[i] < 0):
                lows.append(bound)
            else:
                highs.append(bound)
        lo = max(lows) if lows else min(highs)
        hi = min(highs) if highs else max(lows)
        b = 0.5 * (lo + hi)

    keep = np.nonzero(alpha > _EPS)[0]
    return BinarySvmModel(
        support_indices=keep.astype(np.int64),
        alphas=alpha[keep],
        support_signs=y[keep],
        bias=float(b),
        label_pair=label_pair,
        n_train=n,
        C=C,
    )


def decision_value(model: BinarySvmModel, kernel_row: np.ndarray) -> float:
    """sum_i alpha_i y_i K(x, x_i) + bias for one sample's kernel row."""
    row = np.asarray(kernel_row, dtype=np.float64)
    if row.shape != (model.n_train,):
        raise ValidationError(f"kernel row has shape {row.shape}, expected ({model.n_train},)")
    return float((model.alphas * model.support_signs) @ row[model.support_indices] + model.bias)


def decision_values(model: BinarySvmModel, kernel_rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(kernel_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.n_train:
        raise ValidationError(f"kernel rows have shape {rows.shape}, expected (M, {model.n_train})")
    return rows[:, model.support_indices] @ (model.alphas * model.support_signs) + model.bias


def dual_objective(gram: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    """sum(alpha) - 0.5 alpha' (yy' * K) alpha, the quantity SMO maximizes."""
    gram = np.asarray(gram, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    signed = alpha * y
    return float(alpha.sum() - 0.5 * signed @ gram @ signed)


@dataclass(frozen=True)
class PairModel:
    model: BinarySvmModel
    train_indices: np.ndarray  # rows of the full training gram this pair used

    def __post_init__(self):
        idx = np.asarray(self.train_indices, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "train_indices", idx)


@dataclass(frozen=True)
class OvoModel:
    pairs: dict[tuple[int, int], PairModel]
    num_classes: int
    n_train: int

    def class_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.pairs)


def train_ovo(
    gram: np.ndarray,
    labels: Sequence[int],
    C: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    num_classes: int | None = None,
) -> OvoModel:
    """One binary model per unordered class pair, on that pair's sub-Gram."""
    gram = np.asarray(gram, dtype=np.float64)
    labels = np.asarray(labels)
    present = sorted(int(c) for c in np.unique(labels))
    if len(present) < 2:
        raise ValidationError("one-against-one needs at least 2 classes present")
    if num_classes is None:
        num_classes = max(present) + 1
    pairs: dict[tuple[int, int], PairModel] = {}
    for ai in range(len(present)):
        for bi in range(ai + 1, len(present)):
            a, b = present[ai], present[bi]
            idx = np.nonzero((labels == a) | (labels == b))[0]
            if not np.any(labels[idx] == a) or not np.any(labels[idx] == b):
                raise SkipPairError(f"pair ({a}, {b}) is missing samples for one class")
            y = np.where(labels[idx] == a, 1.0, -1.0)
            sub = gram[np.ix_(idx, idx)]
            model = train_binary_smo(sub, y, C=C, tol=tol, max_passes=max_passes, label_pair=(a, b))
            pairs[(a, b)] = PairModel(model=model, train_indices=idx)
    return OvoModel(pairs=pairs, num_classes=num_classes, n_train=gram.shape[0])


def predict_ovo_detailed(model: OvoModel, kernel_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Predictions plus the per-class vote and won-margin tallies behind them.

    Ties on votes go to the larger summed |decision value| over pairs the
    class won, then to the lowest class index.
    """
    rows = np.asarray(kernel_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.n_train:
        raise ValidationError(f"kernel rows have shape {rows.shape}, expected (M, {model.n_train})")
    m = rows.shape[0]
    votes = np.zeros((m, model.num_classes), dtype=np.int64)
    margins = np.zeros((m, model.num_classes), dtype=np.float64)
    for (a, b), pair in sorted(model.pairs.items()):
        dec = decision_values(pair.model, rows[:, pair.train_indices])
        win_a = dec > 0
        votes[:, a] += win_a
        votes[:, b] += ~win_a
        margins[:, a] += np.where(win_a, np.abs(dec), 0.0)
        margins[:, b] += np.where(win_a, 0.0, np.abs(dec))
    predicted = np.empty(m, dtype=np.int64)
    for r in range(m):
        top = votes[r].max()
        tied = np.nonzero(votes[r] == top)[0]
        if tied.size > 1:
            best = margins[r][tied].max()
            tied = tied[margins[r][tied] == best]
        predicted[r] = tied[0]
    return predicted, votes, margins


def predict_ovo(model: OvoModel, kernel_rows: np.ndarray) -> np.ndarray:
    predicted, _, _ = predict_ovo_detailed(model, kernel_rows)
    return predicted


def save_binary_model(model: BinarySvmModel, path: str | Path) -> None:
    lines = [
        "adpm-svm 1",
        f"label_pair\t{model.label_pair[0]}\t{model.label_pair[1]}",
        f"C\t{model.C!r}",
        f"n_train\t{model.n_train}",
        f"bias\t{model.bias!r}",
    ]
    for idx, a, s in zip(model.support_indices, model.alphas, model.support_signs):
        lines.append(f"sv\t{int(idx)}\t{float(a)!r}\t{int(s)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_binary_model(path: str | Path) -> BinarySvmModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("adpm-svm"):
        raise ValidationError(f"{path}: not a model file")
    fields: dict[str, list[str]] = {}
    svs: list[tuple[int, float, int]] = []
    for line in lines[1:]:
        parts = line.split("\t")
        if parts[0] == "sv":
            svs.append((int(parts[1]), float(parts[2]), int(parts[3])))
        elif parts[0]:
            fields[parts[0]] = parts[1:]
    return BinarySvmModel(
        support_indices=np.array([s[0] for s in svs], dtype=np.int64),
        alphas=np.array([s[1] for s in svs], dtype=np.float64),
        support_signs=np.array([s[2] for s in svs], dtype=np.float64),
        bias=float(fields["bias"][0]),
        label_pair=(int(fields["label_pair"][0]), int(fields["label_pair"][1])),
        n_train=int(fields["n_train"][0]),
        C=float(fields["C"][0]),
    )
