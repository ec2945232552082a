import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adpm.codebook import (
    Codebook,
    assign_word,
    collect_descriptors,
    encode_histogram,
    load_codebook,
    save_codebook,
    train_codebook,
)
from adpm.errors import DegenerateDataError, InsufficientDataError, ValidationError
from adpm.synth import brute_force_histogram
from conftest import make_map, make_record, random_map


def records_of_maps(maps_per_record):
    return [
        make_record(f"img{i}", i % 2, maps) for i, maps in enumerate(maps_per_record)
    ]


def test_collect_keeps_everything_below_cap(rng):
    records = records_of_maps([[random_map(rng, 2, 3)] for _ in range(4)])
    rows = collect_descriptors(records, layer=0, cap=1000, seed=0)
    assert rows.shape == (16, 3)


def test_collect_subsamples_to_cap_reproducibly(rng):
    records = records_of_maps([[random_map(rng, 2, 3)] for _ in range(4)])
    first = collect_descriptors(records, layer=0, cap=8, seed=5)
    second = collect_descriptors(records, layer=0, cap=8, seed=5)
    other = collect_descriptors(records, layer=0, cap=8, seed=6)
    assert first.shape == (8, 3)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, other)


def test_collect_insufficient_for_vocabulary(rng):
    records = records_of_maps([[random_map(rng, 1, 3)]])
    with pytest.raises(InsufficientDataError):
        collect_descriptors(records, layer=0, cap=1000, seed=0, min_rows=300)


def test_train_two_separated_blobs():
    rows = np.vstack([np.zeros((10, 2)), np.full((10, 2), 10.0)])
    book = train_codebook(rows, size=2, seed=1)
    centers = book.centers[np.argsort(book.centers[:, 0])]
    assert np.allclose(centers[0], [0.0, 0.0])
    assert np.allclose(centers[1], [10.0, 10.0])


def test_train_wcss_non_increasing(rng):
    rows = rng.normal(size=(200, 4))
    book = train_codebook(rows, size=7, seed=2)
    wcss = np.array(book.wcss_history)
    assert np.all(np.diff(wcss) <= 1e-9 * max(1.0, wcss[0]))


def test_train_three_blobs_recovers_means(rng):
    means = np.array([[0.0, 0.0], [5.0, 5.0], [10.0, 0.0]])
    rows = np.vstack([m + rng.normal(0, 0.1, size=(30, 2)) for m in means])
    book = train_codebook(rows, size=3, seed=3)

    # exhaustive-assignment oracle: each sample's nearest center, then check
    # every center sits within 0.5 of the matching blob mean
    for m in means:
        distances = np.linalg.norm(book.centers - m, axis=1)
        assert distances.min() < 0.5
    assignments = np.array([assign_word(r, book) for r in rows])
    for blob in range(3):
        blob_assignments = assignments[blob * 30 : (blob + 1) * 30]
        assert len(np.unique(blob_assignments)) == 1


def test_train_rejects_degenerate_rows():
    rows = np.ones((50, 3))
    with pytest.raises(DegenerateDataError):
        train_codebook(rows, size=2, seed=0)


def test_train_is_bit_reproducible(rng):
    rows = rng.normal(size=(120, 3))
    a = train_codebook(rows, size=5, seed=11)
    b = train_codebook(rows, size=5, seed=11)
    assert np.array_equal(a.centers, b.centers)


def test_assign_basic():
    book = Codebook(layer_index=0, centers=np.array([[0.0, 0.0], [10.0, 10.0]]))
    assert assign_word(np.array([1.0, 1.0]), book) == 0


def test_assign_tie_goes_to_lowest_index():
    book = Codebook(layer_index=0, centers=np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert assign_word(np.array([1.0, 0.0]), book) == 0


def test_assign_matches_linear_scan(rng):
    centers = rng.normal(size=(300, 5))
    book = Codebook(layer_index=0, centers=centers)
    for _ in range(20):
        query = rng.normal(size=5)
        best = min(range(300), key=lambda d: float(((book.centers[d] - query) ** 2).sum()))
        assert assign_word(query, book) == best


def test_assign_rejects_dimension_mismatch():
    book = Codebook(layer_index=0, centers=np.array([[0.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(ValidationError):
        assign_word(np.array([1.0, 2.0, 3.0]), book)


def test_encode_all_cells_on_one_word():
    centers = np.array([[0.0, 0.0], [5.0, 5.0], [9.0, 1.0], [2.0, 8.0]])
    book = Codebook(layer_index=0, centers=centers)
    fmap = make_map(np.tile(np.array([2.0, 8.0], dtype=np.float32), (2, 2, 1)))
    hist = encode_histogram(fmap, book)
    assert hist.counts.tolist() == [0, 0, 0, 4]


def test_encode_counts_partition_cells(rng):
    book = Codebook(layer_index=0, centers=rng.normal(size=(6, 3)))
    fmap = random_map(rng, 5, 3)
    hist = encode_histogram(fmap, book)
    assert hist.total == 25
    assert np.all(hist.counts >= 0)


def test_encode_matches_brute_force_13x13(rng):
    book = Codebook(layer_index=0, centers=rng.normal(size=(10, 4)))
    fmap = random_map(rng, 13, 4)
    fast = encode_histogram(fmap, book)
    slow = brute_force_histogram(fmap, book)
    assert np.array_equal(fast.counts, slow.counts)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_encode_invariant_under_cell_reorder(seed):
    rng = np.random.default_rng(seed)
    book = Codebook(layer_index=0, centers=rng.normal(size=(5, 2)))
    values = rng.normal(size=(4, 4, 2)).astype(np.float32)
    base = encode_histogram(make_map(values), book)
    flat = values.reshape(16, 2)[rng.permutation(16)]
    shuffled = encode_histogram(make_map(flat.reshape(4, 4, 2)), book)
    assert np.array_equal(base.counts, shuffled.counts)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), shift=st.floats(-3.0, 3.0))
def test_assign_invariant_under_joint_translation(seed, shift):
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(6, 3))
    query = rng.normal(size=3)
    base = assign_word(query, Codebook(layer_index=0, centers=centers))
    moved = assign_word(query + shift, Codebook(layer_index=0, centers=centers + shift))
    assert base == moved


def test_codebook_rejects_duplicate_centers():
    with pytest.raises(DegenerateDataError):
        Codebook(layer_index=0, centers=np.array([[1.0, 2.0], [1.0, 2.0]]))


def test_codebook_save_load_assigns_identically(tmp_path, rng):
    rows = rng.normal(size=(100, 3))
    book = train_codebook(rows, size=6, seed=4, layer_index=2)
    save_codebook(book, tmp_path / "book.adpm")
    loaded = load_codebook(tmp_path / "book.adpm")
    assert loaded.layer_index == 2
    assert loaded.seed == 4
    assert np.array_equal(loaded.centers, book.centers)
    for _ in range(10):
        q = rng.normal(size=3)
        assert assign_word(q, loaded) == assign_word(q, book)
