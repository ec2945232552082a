import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adpm.errors import ValidationError
from adpm.kernels import fuse_grams, ideal_matrix
from adpm.simplex_qp import (
    QPProblem,
    assemble_qp,
    learn_weights,
    project_to_simplex,
    solve_simplex_qp,
)
from adpm.synth import brute_force_simplex
from conftest import intersection_gram_oracle


def random_psd(rng, n, scale=1.0):
    m = rng.normal(size=(n, n)) * scale
    return m @ m.T


def test_assemble_perfect_alignment():
    y = ideal_matrix([0, 0, 1, 1]).matrix
    qp = assemble_qp([y], y, lam=0.5)
    norm2 = float((y * y).sum())
    assert qp.A[0, 0] == norm2
    assert qp.b[0] == norm2
    assert qp.c == norm2


def test_assemble_zero_kernel_zeroes_terms():
    y = ideal_matrix([0, 1]).matrix
    k1 = np.array([[2.0, 1.0], [1.0, 2.0]])
    qp = assemble_qp([k1, np.zeros((2, 2))], y, lam=0.5)
    assert qp.b[1] == 0.0
    assert qp.A[0, 1] == qp.A[1, 0] == 0.0
    assert qp.A[1, 1] == 0.0


def test_assemble_hand_summed_2x2():
    k1 = np.array([[1.0, 2.0], [2.0, 3.0]])
    k2 = np.array([[4.0, 0.0], [0.0, 5.0]])
    y = np.array([[1.0, 0.0], [0.0, 1.0]])
    qp = assemble_qp([k1, k2], y, lam=0.0)
    assert qp.A[0, 0] == 1 + 4 + 4 + 9
    assert qp.A[0, 1] == 1 * 4 + 0 + 0 + 3 * 5
    assert qp.A[1, 1] == 16 + 25
    assert qp.b.tolist() == [1 + 3, 4 + 5]
    assert qp.c == 2.0


def test_assemble_rejects_shape_mismatch():
    with pytest.raises(ValidationError):
        assemble_qp([np.eye(2), np.eye(3)], np.eye(2), lam=0.5)


def test_project_to_simplex_known_points():
    assert np.allclose(project_to_simplex(np.array([0.5, 0.5])), [0.5, 0.5])
    assert np.allclose(project_to_simplex(np.array([2.0, 0.0])), [1.0, 0.0])
    assert np.allclose(project_to_simplex(np.array([-1.0, -1.0])), [0.5, 0.5])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), dim=st.integers(1, 6))
def test_projection_is_feasible_and_idempotent(seed, dim):
    rng = np.random.default_rng(seed)
    v = rng.normal(scale=3.0, size=dim)
    p = project_to_simplex(v)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-9
    assert np.allclose(project_to_simplex(p), p, atol=1e-12)


def test_solver_reaches_vertex():
    qp = QPProblem(A=np.eye(2), b=np.array([10.0, 0.0]), c=0.0, lam=0.0)
    sol = solve_simplex_qp(qp)
    # inline 0.001-step grid over the 2-simplex (finer than brute_force_simplex allows)
    t = np.linspace(0.0, 1.0, 1001)
    W = np.stack([t, 1.0 - t], axis=1)
    objs = np.einsum("ki,ij,kj->k", W, qp.A, W) - 2.0 * W @ qp.b
    k = int(np.argmin(objs))
    assert np.allclose(W[k], [1.0, 0.0])
    assert np.allclose(sol.weights, [1.0, 0.0], atol=1e-9)
    assert sol.objective <= objs[k] + 1e-9


def test_identical_kernels_split_evenly(rng):
    k = random_psd(rng, 6)
    labels = [0, 0, 0, 1, 1, 1]
    sol = learn_weights([k, k], labels, lam=0.5)
    assert np.allclose(sol.weights, [0.5, 0.5], atol=1e-6)


def test_solver_matches_grid_oracle(rng):
    for trial in range(10):
        A = random_psd(rng, 3)
        b = rng.normal(size=3)
        qp = QPProblem(A=A, b=b, c=0.0, lam=0.5)
        sol = solve_simplex_qp(qp)
        _, obj_grid = brute_force_simplex(A, b, 0.5, resolution=0.01)
        assert sol.objective <= obj_grid + 1e-3
        assert np.all(sol.weights >= -1e-9)
        assert abs(sol.weights.sum() - 1.0) <= 1e-9


def test_learn_prefers_aligned_kernel():
    labels = np.array([0] * 5 + [1] * 5)
    y = ideal_matrix(labels).matrix
    aligned = y.copy()
    anti = 1.0 - y  # complement: high kernel value exactly where labels differ
    sol = learn_weights([aligned, anti], labels, lam=0.5)
    w_grid, obj_grid = brute_force_simplex(*_qp_terms([aligned, anti], y), resolution=0.01)
    assert sol.weights[0] > 0.9
    assert w_grid[0] > 0.9
    assert sol.objective <= obj_grid + 1e-3


def _qp_terms(grams, y, lam=0.5):
    qp = assemble_qp(grams, y, lam)
    return qp.A, qp.b, lam


def test_learn_identical_grams_uniform(rng):
    k = random_psd(rng, 8)
    labels = rng.integers(0, 2, size=8)
    sol = learn_weights([k] * 5, labels, lam=0.5)
    assert np.allclose(sol.weights, 0.2, atol=1e-6)


def test_learn_recovers_signal_layer(rng):
    # five layers of histograms; only layer 2 (index 1) separates the classes
    labels = np.array([0] * 6 + [1] * 6)
    grams = []
    for layer in range(5):
        hists = []
        for lbl in labels:
            if layer == 1:
                base = np.array([9, 0, 1]) if lbl == 0 else np.array([0, 9, 1])
            else:
                base = np.array([4, 3, 3])
            hists.append(base + rng.integers(0, 2, size=3))
        mats = np.array([h / 1.0 for h in hists])
        grams.append(np.array(intersection_gram_oracle(mats, mats)))
    sol = learn_weights(grams, labels, lam=0.5)
    assert int(np.argmax(sol.weights)) == 1


def test_solution_beats_every_vertex(rng):
    for _ in range(5):
        A = random_psd(rng, 4)
        b = rng.normal(size=4)
        qp = QPProblem(A=A, b=b, c=0.0, lam=0.5)
        sol = solve_simplex_qp(qp)
        for i in range(4):
            assert sol.objective <= qp.objective(np.eye(4)[i]) + 1e-6
        assert sol.objective <= qp.objective(np.full(4, 0.25)) + 1e-6


def test_objective_history_monotone(rng):
    A = random_psd(rng, 5, scale=3.0)
    b = rng.normal(size=5) * 5.0
    sol = solve_simplex_qp(QPProblem(A=A, b=b, c=0.0, lam=0.5))
    hist = np.array(sol.objective_history)
    assert np.all(np.diff(hist) <= 1e-9 * max(1.0, np.abs(hist[0])))


def test_weights_permute_with_kernels(rng):
    A = random_psd(rng, 4)
    b = rng.normal(size=4)
    perm = np.array([2, 0, 3, 1])
    sol = solve_simplex_qp(QPProblem(A=A, b=b, c=0.0, lam=0.5))
    sol_p = solve_simplex_qp(QPProblem(A=A[np.ix_(perm, perm)], b=b[perm], c=0.0, lam=0.5))
    assert np.allclose(sol_p.weights, sol.weights[perm], atol=1e-8)


def test_algebra_direct_equals_qp_form(rng):
    # the expansion of the alignment objective must match its direct evaluation
    for _ in range(5):
        n, L = 7, 3
        labels = rng.integers(0, 3, size=n)
        y = ideal_matrix(labels).matrix
        grams = [random_psd(rng, n) for _ in range(L)]
        w = rng.random(L)
        w /= w.sum()
        lam = 0.5
        qp = assemble_qp(grams, y, lam)
        direct = float(((fuse_grams(grams, w) - y) ** 2).sum()) + lam * float(w @ w)
        via_qp = qp.objective(w) + qp.c
        assert direct == pytest.approx(via_qp, rel=1e-6)


def test_solver_rejects_nonfinite():
    with pytest.raises(ValidationError):
        QPProblem(A=np.array([[np.inf]]), b=np.array([0.0]), c=0.0, lam=0.5)


def test_max_iter_exit_is_feasible(rng):
    A = random_psd(rng, 3, scale=50.0)
    b = rng.normal(size=3) * 100.0
    sol = solve_simplex_qp(QPProblem(A=A, b=b, c=0.0, lam=0.5), tol=0.0, max_iter=3)
    assert not sol.converged
    assert np.all(sol.weights >= -1e-9)
    assert abs(sol.weights.sum() - 1.0) <= 1e-9
