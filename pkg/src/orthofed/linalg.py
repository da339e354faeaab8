"""Dense linear-algebra kernel.

Matrices are 2-D float64 numpy arrays. Every operation validates its
inputs (shape compatibility, finiteness) so NaN/Inf can never propagate
silently into training or diagnostics. Solves go through an explicit LU
factorization with partial pivoting so near-singular systems are
reported instead of producing garbage.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatchError, NonFiniteMatrixError, SingularMatrixError

# Pivots below PIVOT_RTOL * max|entry| are treated as numerically zero.
PIVOT_RTOL = 1e-12
# sigma_min below COND_RTOL * sigma_max reports an infinite condition number.
COND_RTOL = 1e-12


def check_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting non-finite entries."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteMatrixError(f"{name} contains NaN or Inf entries")
    return arr


def check_square(a, name: str = "matrix") -> np.ndarray:
    arr = check_matrix(a, name)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    a = check_matrix(a, "a")
    b = check_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(
            f"cannot multiply {a.shape} by {b.shape}: inner dimensions differ"
        )
    return a @ b


def transpose(a) -> np.ndarray:
    return check_matrix(a).T.copy()


def add(a, b) -> np.ndarray:
    a = check_matrix(a, "a")
    b = check_matrix(b, "b")
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def sub(a, b) -> np.ndarray:
    a = check_matrix(a, "a")
    b = check_matrix(b, "b")
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a - b


def scale(a, factor: float) -> np.ndarray:
    a = check_matrix(a)
    if not math.isfinite(factor):
        raise NonFiniteMatrixError("scale factor must be finite")
    return a * float(factor)


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(check_matrix(a)))


def lu_factor(a) -> tuple[np.ndarray, np.ndarray]:
    """LU factorization with partial pivoting, packed in one matrix.

    Returns (lu, perm) where lu holds U on/above the diagonal and the
    unit-lower-triangular multipliers below it, and perm is the row
    permutation applied to the input. Raises SingularMatrixError when a
    pivot falls below PIVOT_RTOL times the largest input magnitude.
    """
    a = check_square(a)
    n = a.shape[0]
    lu = a.copy()
    perm = np.arange(n)
    amax = float(np.max(np.abs(a))) if n else 0.0
    tol = PIVOT_RTOL * amax
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        pivot = lu[k, k]
        if abs(pivot) <= tol:
            raise SingularMatrixError(
                f"pivot {pivot:.3e} at column {k} is zero to working precision"
            )
        lu[k + 1 :, k] /= pivot
        lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, perm


def solve(a, b) -> np.ndarray:
    """Solve a @ x = b via LU with partial pivoting; b may have many columns."""
    a = check_square(a, "a")
    b_arr = np.asarray(b, dtype=np.float64)
    vector_rhs = b_arr.ndim == 1
    if vector_rhs:
        b_arr = b_arr[:, None]
    b_arr = check_matrix(b_arr, "b")
    if b_arr.shape[0] != a.shape[0]:
        raise DimensionMismatchError(
            f"rhs has {b_arr.shape[0]} rows, expected {a.shape[0]}"
        )
    lu, perm = lu_factor(a)
    n = a.shape[0]
    x = b_arr[perm].copy()
    for k in range(1, n):  # forward: unit lower triangle
        x[k] -= lu[k, :k] @ x[:k]
    for k in range(n - 1, -1, -1):  # backward: upper triangle
        if k + 1 < n:
            x[k] -= lu[k, k + 1 :] @ x[k + 1 :]
        x[k] /= lu[k, k]
    return x[:, 0] if vector_rhs else x


def singular_values(a) -> np.ndarray:
    """Singular values in descending order."""
    a = check_square(a)
    return np.linalg.svd(a, compute_uv=False)


def condition_number(a) -> float:
    """sigma_max / sigma_min, or math.inf when the matrix is numerically singular."""
    values = singular_values(a)
    if values.size == 0:
        return 1.0
    smax = float(values[0])
    smin = float(values[-1])
    if smax == 0.0 or smin < COND_RTOL * smax:
        return math.inf
    return smax / smin
