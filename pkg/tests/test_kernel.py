"""Kernel primitives: reductions and the pivoted least-squares solve."""

import numpy as np
import pytest

from anderkit.kernel import axpy, dot, least_squares, norm2


def test_dot_matches_numpy_on_random_vectors():
    rng = np.random.default_rng(101)
    for _ in range(25):
        n = int(rng.integers(1, 400))
        a = rng.standard_normal(n)
        b = rng.standard_normal(n)
        assert abs(dot(a, b) - float(np.dot(a, b))) < 1e-10 * max(1.0, float(np.abs(a @ b)))


def test_dot_is_exact_left_to_right_accumulation():
    # Ordering is part of the contract: same result as a python loop.
    rng = np.random.default_rng(7)
    a = rng.standard_normal(64)
    b = rng.standard_normal(64)
    acc = 0.0
    for ai, bi in zip(a.tolist(), b.tolist()):
        acc += ai * bi
    assert dot(a, b) == acc


def test_norm2_basic_values():
    assert norm2(np.array([3.0, 4.0])) == 5.0
    assert norm2(np.zeros(10)) == 0.0
    rng = np.random.default_rng(11)
    v = rng.standard_normal(333)
    assert abs(norm2(v) - float(np.linalg.norm(v))) < 1e-12 * float(np.linalg.norm(v))


def test_dot_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        dot(np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        norm2(np.ones((2, 2)))


def test_axpy():
    x = np.array([1.0, 2.0])
    y = np.array([10.0, 20.0])
    out = axpy(3.0, x, y)
    assert np.array_equal(out, [13.0, 26.0])
    # inputs untouched
    assert np.array_equal(x, [1.0, 2.0]) and np.array_equal(y, [10.0, 20.0])


def test_least_squares_square_exact():
    rng = np.random.default_rng(3)
    for _ in range(10):
        mat = rng.standard_normal((6, 6)) + 6.0 * np.eye(6)
        rhs = rng.standard_normal(6)
        w = least_squares(mat, rhs)
        assert np.allclose(mat @ w, rhs, atol=1e-9)


def test_least_squares_overdetermined_matches_lstsq():
    rng = np.random.default_rng(19)
    for _ in range(20):
        n = int(rng.integers(4, 40))
        p = int(rng.integers(1, n + 1))
        mat = rng.standard_normal((n, p))
        rhs = rng.standard_normal(n)
        w = least_squares(mat, rhs)
        ref, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
        # residual norms must agree even if coefficients differ
        assert abs(norm2(rhs - mat @ w) - norm2(rhs - mat @ ref)) < 1e-9


def test_least_squares_beats_coarse_grid_search():
    # Independent check on a tiny instance: no grid point does better.
    mat = np.array([[1.0, 0.5], [0.0, 1.0], [1.0, 1.0]])
    rhs = np.array([1.0, -1.0, 0.5])
    w = least_squares(mat, rhs)
    best = norm2(rhs - mat @ w)
    grid = np.linspace(-3.0, 3.0, 121)
    for a in grid:
        for b in grid:
            assert best <= norm2(rhs - mat @ np.array([a, b])) + 1e-12


def test_least_squares_rank_deficient_duplicate_columns():
    # Two identical columns: pivoting keeps one, the clone gets weight 0.
    col = np.array([1.0, 2.0, 3.0])
    mat = np.column_stack([col, col])
    rhs = np.array([1.0, 2.0, 3.0])
    w = least_squares(mat, rhs)
    assert np.isfinite(w).all()
    assert np.allclose(mat @ w, rhs, atol=1e-12)
    assert min(abs(w[0]), abs(w[1])) == 0.0


def test_least_squares_zero_matrix_returns_zero():
    w = least_squares(np.zeros((4, 2)), np.ones(4))
    assert np.array_equal(w, np.zeros(2))


def test_least_squares_near_dependent_columns_stay_bounded():
    # Columns differing by ~1e-15 must not produce 1e15-sized coefficients.
    rng = np.random.default_rng(23)
    base = rng.standard_normal(8)
    mat = np.column_stack([base, base * (1.0 + 1e-15)])
    w = least_squares(mat, rng.standard_normal(8))
    assert float(np.max(np.abs(w))) < 1e6


def test_least_squares_input_validation():
    with pytest.raises(ValueError):
        least_squares(np.ones(3), np.ones(3))  # not 2-D
    with pytest.raises(ValueError):
        least_squares(np.ones((3, 4)), np.ones(3))  # p > n
    with pytest.raises(ValueError):
        least_squares(np.ones((3, 0)), np.ones(3))  # empty
    with pytest.raises(ValueError):
        least_squares(np.ones((3, 2)), np.ones(4))  # rhs length
