import itertools

import numpy as np
import pytest

from adpm.errors import ValidationError
from adpm.svm import (
    BinarySvmModel,
    decision_value,
    decision_values,
    dual_objective,
    load_binary_model,
    predict_ovo,
    predict_ovo_detailed,
    save_binary_model,
    train_binary_smo,
    train_ovo,
)
from conftest import intersection_gram_oracle


def separable_histograms(rng, per_class=5, lo=5, hi=10):
    """Two disjoint-support count clusters; intersection kernel separates them."""
    a = np.hstack([rng.integers(lo, hi, size=(per_class, 3)), rng.integers(0, 2, size=(per_class, 3))])
    b = np.hstack([rng.integers(0, 2, size=(per_class, 3)), rng.integers(lo, hi, size=(per_class, 3))])
    rows = np.vstack([a, b]).astype(float)
    y = np.array([1.0] * per_class + [-1.0] * per_class)
    return rows, y


def grid_dual_maximum(gram, y, C, step):
    """Exhaustive dual maximization on a box grid, with the equality
    constraint eliminating the last negative-class coordinate."""
    n = len(y)
    pos = [i for i in range(n) if y[i] > 0]
    neg = [i for i in range(n) if y[i] < 0]
    free = pos + neg[:-1]
    last = neg[-1]
    ticks = np.arange(0.0, C + step / 2, step)
    best = -np.inf
    best_alpha = None
    for combo in itertools.product(ticks, repeat=len(free)):
        alpha = np.zeros(n)
        for idx, val in zip(free, combo):
            alpha[idx] = val
        balance = alpha[pos].sum() - alpha[neg[:-1]].sum()
        if balance < -1e-12 or balance > C + 1e-12:
            continue
        alpha[last] = min(max(balance, 0.0), C)
        value = dual_objective(gram, y, alpha)
        if value > best:
            best = value
            best_alpha = alpha
    return best, best_alpha


def test_two_point_separable_pair():
    gram = 2.0 * np.eye(2)
    y = np.array([1.0, -1.0])
    model = train_binary_smo(gram, y, C=5.0)
    assert set(model.support_indices.tolist()) == {0, 1}
    dec = decision_values(model, gram)
    assert np.all(np.sign(dec) == y)


def test_separable_clusters_reach_full_training_accuracy(rng):
    rows, y = separable_histograms(rng)
    gram = intersection_gram_oracle(rows, rows)
    model = train_binary_smo(gram, y)
    dec = decision_values(model, gram)
    assert np.mean(np.sign(dec) == y) == 1.0
    alphas = model.full_alphas()
    assert np.all(alphas >= -1e-9)
    assert np.all(alphas <= 1.0 + 1e-9)
    assert abs(float((alphas * y).sum())) <= 1e-6


def test_dual_matches_exhaustive_grid(rng):
    # N=4 keeps the grid exhaustive at a fine step; histograms normalized so
    # kernel entries stay O(1)
    rows = np.array(
        [
            [6.0, 1.0, 0.0],
            [5.0, 2.0, 0.0],
            [0.0, 1.0, 6.0],
            [1.0, 0.0, 6.0],
        ]
    )
    rows = rows / rows.sum(axis=1, keepdims=True)
    y = np.array([1.0, 1.0, -1.0, -1.0])
    gram = intersection_gram_oracle(rows, rows)
    model = train_binary_smo(gram, y, C=1.0, tol=1e-5, max_passes=100)
    ours = dual_objective(gram, y, model.full_alphas())
    best, _ = grid_dual_maximum(gram, y, C=1.0, step=0.02)
    assert abs(ours - best) <= 1e-3
    assert ours >= best - 1e-9  # the oracle is restricted to grid points


def test_duplicate_training_point_keeps_decisions(rng):
    rows, y = separable_histograms(rng, per_class=4)
    gram = intersection_gram_oracle(rows, rows)
    model = train_binary_smo(gram, y)
    base = decision_values(model, gram)

    rows_dup = np.vstack([rows, rows[0]])
    y_dup = np.append(y, y[0])
    gram_dup = intersection_gram_oracle(rows_dup, rows_dup)
    model_dup = train_binary_smo(gram_dup, y_dup)
    again = decision_values(model_dup, gram_dup[: len(rows), :])
    assert np.allclose(again, base, atol=1e-6)


def test_single_class_rejected():
    with pytest.raises(ValidationError):
        train_binary_smo(np.eye(3), np.array([1.0, 1.0, 1.0]))


def test_decision_value_empty_model_is_bias():
    model = BinarySvmModel(
        support_indices=np.array([], dtype=np.int64),
        alphas=np.array([]),
        support_signs=np.array([]),
        bias=0.3,
        label_pair=(1, -1),
        n_train=4,
    )
    assert decision_value(model, np.zeros(4)) == pytest.approx(0.3)


def test_support_vector_sits_on_margin(rng):
    rows, y = separable_histograms(rng)
    gram = intersection_gram_oracle(rows, rows)
    model = train_binary_smo(gram, y, tol=1e-4, max_passes=100)
    unbounded = model.support_indices[(model.alphas > 1e-8) & (model.alphas < 1.0 - 1e-8)]
    assert unbounded.size > 0
    for i in unbounded:
        value = decision_value(model, gram[i])
        assert np.sign(value) == y[i]
        assert abs(value) >= 1.0 - 1e-3


def test_decision_value_matches_direct_sum(rng):
    kernel_row = rng.random(6)
    model = BinarySvmModel(
        support_indices=np.array([1, 4], dtype=np.int64),
        alphas=np.array([0.7, 0.2]),
        support_signs=np.array([1.0, -1.0]),
        bias=-0.05,
        label_pair=(1, -1),
        n_train=6,
    )
    want = 0.7 * kernel_row[1] - 0.2 * kernel_row[4] - 0.05
    assert decision_value(model, kernel_row) == pytest.approx(want)


def test_decision_rejects_wrong_row_length():
    model = BinarySvmModel(
        support_indices=np.array([0], dtype=np.int64),
        alphas=np.array([0.5]),
        support_signs=np.array([1.0]),
        bias=0.0,
        label_pair=(1, -1),
        n_train=3,
    )
    with pytest.raises(ValidationError):
        decision_value(model, np.zeros(4))


def four_class_counts(rng, per_class=5):
    rows = []
    labels = []
    for cls in range(4):
        block = np.zeros((per_class, 8))
        block[:, 2 * cls : 2 * cls + 2] = rng.integers(6, 10, size=(per_class, 2))
        block += rng.integers(0, 2, size=block.shape)
        rows.append(block)
        labels += [cls] * per_class
    return np.vstack(rows).astype(float), np.array(labels)


def test_ovo_pair_count():
    rng = np.random.default_rng(1)
    rows, labels = four_class_counts(rng)
    gram = intersection_gram_oracle(rows, rows)
    ovo = train_ovo(gram, labels[: len(rows)])
    assert len(ovo.pairs) == 4 * 3 // 2
    three = train_ovo(gram[:15, :15], labels[:15])
    assert len(three.pairs) == 3


def test_ovo_two_classes_equals_binary(rng):
    rows, y = separable_histograms(rng)
    labels = np.where(y > 0, 0, 1)
    gram = intersection_gram_oracle(rows, rows)
    ovo = train_ovo(gram, labels)
    binary = train_binary_smo(gram, np.where(labels == 0, 1.0, -1.0), label_pair=(0, 1))
    ovo_pred = predict_ovo(ovo, gram)
    binary_pred = np.where(decision_values(binary, gram) > 0, 0, 1)
    assert np.array_equal(ovo_pred, binary_pred)


def test_ovo_four_class_training_accuracy(rng):
    rows, labels = four_class_counts(rng)
    gram = intersection_gram_oracle(rows, rows)
    ovo = train_ovo(gram, labels)
    assert np.mean(predict_ovo(ovo, gram) == labels) == 1.0


def test_predict_unanimous_vote(rng):
    rows, labels = four_class_counts(rng)
    gram = intersection_gram_oracle(rows, rows)
    ovo = train_ovo(gram, labels)
    row = intersection_gram_oracle(rows[10:11] * 3.0, rows)  # clearly class 2
    _, votes, _ = predict_ovo_detailed(ovo, row)
    assert votes[0, 2] == 3
    assert predict_ovo(ovo, row)[0] == 2


def test_predict_cycle_breaks_by_margin():
    # hand-built 3-class cycle: 0 beats 1, 1 beats 2, 2 beats 0; every class
    # wins exactly one pair, so the summed winning margins decide
    def fixed_model(pair, sign, magnitude, n):
        return BinarySvmModel(
            support_indices=np.array([0], dtype=np.int64),
            alphas=np.array([0.0]),
            support_signs=np.array([1.0]),
            bias=sign * magnitude,
            label_pair=pair,
            n_train=n,
        )

    from adpm.svm import OvoModel, PairModel

    idx = np.arange(2, dtype=np.int64)
    pairs = {
        (0, 1): PairModel(model=fixed_model((0, 1), +1.0, 0.5, 2), train_indices=idx),
        (1, 2): PairModel(model=fixed_model((1, 2), +1.0, 2.0, 2), train_indices=idx),
        (0, 2): PairModel(model=fixed_model((0, 2), -1.0, 1.0, 2), train_indices=idx),
    }
    ovo = OvoModel(pairs=pairs, num_classes=3, n_train=2)
    predicted, votes, margins = predict_ovo_detailed(ovo, np.zeros((1, 2)))
    assert votes[0].tolist() == [1, 1, 1]
    # margins: class 0 wins (0,1) by 0.5; class 1 wins (1,2) by 2.0; class 2 wins (0,2) by 1.0
    assert margins[0].tolist() == [0.5, 2.0, 1.0]
    assert predicted[0] == 1


def test_predict_training_row_recovers_label(rng):
    rows, labels = four_class_counts(rng)
    gram = intersection_gram_oracle(rows, rows)
    ovo = train_ovo(gram, labels)
    for i in (0, 7, 12, 19):
        assert predict_ovo(ovo, gram[i : i + 1, :])[0] == labels[i]


def test_scaling_gram_and_C_keeps_predictions(rng):
    rows, labels = four_class_counts(rng)
    gram = intersection_gram_oracle(rows, rows)
    gamma = 37.5
    base = predict_ovo(train_ovo(gram, labels, C=1.0), gram)
    scaled = predict_ovo(train_ovo(gamma * gram, labels, C=1.0 / gamma), gamma * gram)
    assert np.array_equal(base, scaled)


def test_training_is_deterministic(rng):
    rows, y = separable_histograms(rng)
    gram = intersection_gram_oracle(rows, rows)
    a = train_binary_smo(gram, y)
    b = train_binary_smo(gram, y)
    assert np.array_equal(a.support_indices, b.support_indices)
    assert np.array_equal(a.alphas, b.alphas)
    assert a.bias == b.bias


def test_dual_feasibility_over_random_separable_sets(rng):
    for trial in range(5):
        rows, y = separable_histograms(rng, per_class=6)
        gram = intersection_gram_oracle(rows, rows)
        model = train_binary_smo(gram, y)
        alphas = model.full_alphas()
        assert np.all(alphas >= -1e-6)
        assert np.all(alphas <= model.C + 1e-6)
        assert abs(float((alphas * y).sum())) <= 1e-6


def test_model_save_load_roundtrip(tmp_path, rng):
    rows, y = separable_histograms(rng)
    gram = intersection_gram_oracle(rows, rows)
    model = train_binary_smo(gram, y, label_pair=(3, 7))
    save_binary_model(model, tmp_path / "m.txt")
    loaded = load_binary_model(tmp_path / "m.txt")
    assert loaded.label_pair == (3, 7)
    assert loaded.bias == model.bias
    assert np.array_equal(loaded.support_indices, model.support_indices)
    assert np.array_equal(loaded.alphas, model.alphas)
    assert np.array_equal(decision_values(loaded, gram), decision_values(model, gram))
