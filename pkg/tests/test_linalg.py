from __future__ import annotations

import math

import numpy as np
import pytest

from orthofed import linalg
from orthofed.errors import (
    DimensionMismatchError,
    NonFiniteMatrixError,
    SingularMatrixError,
)

from conftest import random_orthogonal


def power_iteration_singular_values(a: np.ndarray, iterations: int = 20000) -> np.ndarray:
    """Independent oracle: eigenvalues of a^T a by power iteration with deflation."""
    m = a.T @ a
    d = a.shape[0]
    values = []
    for k in range(d):
        v = np.cos(np.arange(d) + k + 1.0)
        v /= np.linalg.norm(v)
        for _ in range(iterations):
            w = m @ v
            norm = np.linalg.norm(w)
            if norm < 1e-300:
                break
            v = w / norm
        lam = float(v @ m @ v)
        values.append(math.sqrt(max(lam, 0.0)))
        m = m - lam * np.outer(v, v)
    return np.sort(np.array(values))[::-1]


class TestMatmul:
    def test_identity(self, rng):
        a = rng.normal(size=(2, 3))
        np.testing.assert_array_equal(linalg.matmul(np.eye(2), a), a)

    def test_hand_2x2(self):
        a = np.array([[1.0, 1.0], [-1.0, 1.0]])
        b = 0.5 * np.array([[1.0, 1.0], [-1.0, 1.0]])
        np.testing.assert_allclose(
            linalg.matmul(a, b), np.array([[0.0, 1.0], [-1.0, 0.0]]), atol=1e-15
        )

    def test_annihilator(self, rng):
        a = rng.normal(size=(3, 3))
        np.testing.assert_array_equal(linalg.matmul(a, np.zeros((3, 2))), np.zeros((3, 2)))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            linalg.matmul(np.eye(2), np.eye(3))

    def test_rejects_nan(self):
        bad = np.array([[np.nan, 0.0], [0.0, 1.0]])
        with pytest.raises(NonFiniteMatrixError):
            linalg.matmul(bad, np.eye(2))


class TestSolve:
    def test_identity(self, rng):
        b = rng.normal(size=(4, 2))
        np.testing.assert_allclose(linalg.solve(np.eye(4), b), b, atol=1e-15)

    def test_diagonal_inverse(self):
        a = np.diag([2.0, 4.0])
        np.testing.assert_allclose(
            linalg.solve(a, np.eye(2)), np.diag([0.5, 0.25]), atol=1e-15
        )

    def test_zero_matrix_is_singular(self):
        with pytest.raises(SingularMatrixError):
            linalg.solve(np.zeros((3, 3)), np.ones((3, 1)))

    def test_rank_deficient_is_singular(self):
        a = np.array([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(SingularMatrixError):
            linalg.solve(a, np.eye(2))

    @pytest.mark.parametrize("size", [2, 5, 16, 64, 512])
    def test_recovers_solution_well_conditioned(self, size, rng):
        # Construct a with condition number <= 100 from random orthogonal factors.
        q1 = random_orthogonal(size, rng)
        q2 = random_orthogonal(size, rng)
        sigma = np.logspace(0, 2, size)
        a = q1 @ np.diag(sigma) @ q2.T
        x = rng.normal(size=(size, 3))
        recovered = linalg.solve(a, linalg.matmul(a, x))
        assert np.linalg.norm(recovered - x) / np.linalg.norm(x) <= 1e-9

    def test_vector_rhs(self, rng):
        a = np.diag([1.0, 2.0, 4.0])
        b = np.array([1.0, 2.0, 4.0])
        np.testing.assert_allclose(linalg.solve(a, b), np.ones(3), atol=1e-15)

    def test_rhs_row_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            linalg.solve(np.eye(2), np.ones((3, 1)))


class TestSingularValues:
    def test_diagonal(self):
        np.testing.assert_allclose(
            linalg.singular_values(np.diag([3.0, 1.0])), [3.0, 1.0], atol=1e-14
        )

    def test_orthogonal_all_ones(self, rng):
        q = random_orthogonal(6, rng)
        np.testing.assert_allclose(linalg.singular_values(q), np.ones(6), atol=1e-8)

    def test_rank_one_outer_product(self):
        u = np.array([3.0, 4.0]) / 5.0
        v = np.array([1.0, 0.0])
        values = linalg.singular_values(np.outer(u, v))
        np.testing.assert_allclose(values, [1.0, 0.0], atol=1e-14)

    @pytest.mark.parametrize("size", [2, 4, 8, 16])
    def test_against_power_iteration_oracle(self, size, rng):
        q1 = random_orthogonal(size, rng)
        q2 = random_orthogonal(size, rng)
        sigma = np.linspace(1.0, 4.0, size) ** 2
        a = q1 @ np.diag(sigma) @ q2.T
        expected = power_iteration_singular_values(a)
        actual = linalg.singular_values(a)
        assert np.max(np.abs(actual - expected)) / expected[0] <= 1e-6

    def test_descending_order(self, rng):
        values = linalg.singular_values(rng.normal(size=(7, 7)))
        assert np.all(np.diff(values) <= 0)
        assert np.all(values >= 0)


class TestConditionNumber:
    def test_identity(self):
        assert linalg.condition_number(np.eye(5)) == 1.0

    def test_diagonal_ratio(self):
        assert linalg.condition_number(np.diag([2.0, 1.0])) == pytest.approx(2.0)

    def test_singular_reports_infinity(self):
        assert linalg.condition_number(np.zeros((3, 3))) == math.inf
        assert linalg.condition_number(np.diag([1.0, 0.0])) == math.inf

    def test_orthogonal_near_one(self, rng):
        from conftest import random_cayley_transform

        for _ in range(20):
            transform = random_cayley_transform(8, rng)
            kappa = linalg.condition_number(transform.q)
            assert 1.0 <= kappa <= 1.0 + 1e-6


class TestElementwise:
    def test_frobenius_identity(self):
        assert linalg.frobenius_norm(np.eye(2)) == pytest.approx(math.sqrt(2.0))

    def test_transpose_involution(self, rng):
        a = rng.normal(size=(3, 5))
        np.testing.assert_array_equal(linalg.transpose(linalg.transpose(a)), a)

    def test_scale_by_zero(self, rng):
        a = rng.normal(size=(4, 4))
        np.testing.assert_array_equal(linalg.scale(a, 0.0), np.zeros((4, 4)))

    def test_add_sub_roundtrip(self, rng):
        a = rng.normal(size=(3, 3))
        b = rng.normal(size=(3, 3))
        np.testing.assert_allclose(linalg.sub(linalg.add(a, b), b), a, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            linalg.add(np.eye(2), np.eye(3))


def test_operations_are_deterministic(rng):
    a = rng.normal(size=(16, 16))
    b = rng.normal(size=(16, 16))
    assert linalg.matmul(a, b).tobytes() == linalg.matmul(a, b).tobytes()
    assert linalg.solve(a + 5 * np.eye(16), b).tobytes() == linalg.solve(a + 5 * np.eye(16), b).tobytes()
    assert linalg.singular_values(a).tobytes() == linalg.singular_values(a).tobytes()
