"""Cayley parametrization of (block-diagonal) orthogonal transforms.

An unconstrained square matrix X is mapped to an orthogonal Q through
P = (X - X^T)/2 and Q = (I + P)(I - P)^{-1}. Since P is skew-symmetric,
(I - P) is always invertible, so the map is total and differentiable;
``cayley_pullback`` chains a gradient in Q back to a gradient in X.
Block-diagonal structure restricts X (and hence Q) to r independent
diagonal blocks, shrinking the free parameter count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import linalg
from .errors import ConfigError, DimensionMismatchError


@dataclass(frozen=True)
class BlockSpec:
    """Partition of a d-dimensional transform into equally sized diagonal blocks."""

    dimension: int
    block_count: int = 1

    def __post_init__(self):
        if self.dimension < 1:
            raise ConfigError(f"dimension must be positive, got {self.dimension}")
        if self.block_count < 1:
            raise ConfigError(f"block_count must be positive, got {self.block_count}")
        if self.dimension % self.block_count != 0:
            raise ConfigError(
                f"block_count {self.block_count} does not divide dimension {self.dimension}"
            )

    @property
    def block_size(self) -> int:
        return self.dimension // self.block_count

    def block_slices(self) -> list[slice]:
        size = self.block_size
        return [slice(k * size, (k + 1) * size) for k in range(self.block_count)]

    def pattern_mask(self) -> np.ndarray:
        """Boolean d x d mask of the allowed block-diagonal entries."""
        mask = np.zeros((self.dimension, self.dimension), dtype=bool)
        for block in self.block_slices():
            mask[block, block] = True
        return mask


def dof(spec: BlockSpec) -> int:
    """Free parameters of a block-orthogonal transform: d(d/r - 1)/2."""
    size = spec.block_size
    return spec.block_count * (size * (size - 1) // 2)


def skew_part(x) -> np.ndarray:
    """P = (X - X^T)/2; exactly skew-symmetric in IEEE arithmetic."""
    x = linalg.check_square(x, "x")
    return 0.5 * (x - x.T)


def apply_block_mask(a, spec: BlockSpec) -> np.ndarray:
    a = linalg.check_square(a)
    if a.shape[0] != spec.dimension:
        raise DimensionMismatchError(
            f"matrix is {a.shape[0]}x{a.shape[0]}, spec dimension is {spec.dimension}"
        )
    if spec.block_count == 1:
        return a.copy()
    out = np.zeros_like(a)
    for block in spec.block_slices():
        out[block, block] = a[block, block]
    return out


def _check_block_pattern(x: np.ndarray, spec: BlockSpec) -> None:
    if x.shape[0] != spec.dimension:
        raise DimensionMismatchError(
            f"parameter is {x.shape[0]}x{x.shape[0]}, spec dimension is {spec.dimension}"
        )
    if spec.block_count > 1 and np.any(x[~spec.pattern_mask()] != 0.0):
        raise ValueError("parameter has nonzero entries outside the block-diagonal pattern")


@dataclass(frozen=True)
class LocalTransform:
    """Orthogonal feature map Q derived from unconstrained parameter X."""

    spec: BlockSpec
    x: np.ndarray
    q: np.ndarray

    def replaced(self, new_x: np.ndarray) -> "LocalTransform":
        """New transform with Q recomputed from the updated parameter."""
        return cayley_map(new_x, self.spec)

    def pull_gradient(self, grad_q: np.ndarray) -> np.ndarray:
        return cayley_pullback(self, grad_q)


@dataclass(frozen=True)
class LinearTransform:
    """Unconstrained feature map: the parameter is applied directly (Q = X)."""

    spec: BlockSpec
    x: np.ndarray

    @property
    def q(self) -> np.ndarray:
        return self.x

    def replaced(self, new_x: np.ndarray) -> "LinearTransform":
        x = linalg.check_square(new_x, "x")
        _check_block_pattern(x, self.spec)
        return replace(self, x=x)

    def pull_gradient(self, grad_q: np.ndarray) -> np.ndarray:
        return apply_block_mask(grad_q, self.spec)


def cayley_map(x, spec: BlockSpec) -> LocalTransform:
    """Map X to the orthogonal Q = (I + P)(I - P)^{-1} with P = (X - X^T)/2.

    The blocks of Q are obtained from the transposed system
    (I + P) Q^T = (I - P), never by forming an explicit inverse. A
    singular solve here would indicate a bug (skew P makes I - P
    invertible), so SingularMatrixError is allowed to propagate.
    """
    x = linalg.check_square(x, "x")
    _check_block_pattern(x, spec)
    p = skew_part(x)
    q = np.zeros_like(p)
    for block in spec.block_slices():
        pk = p[block, block]
        eye = np.eye(pk.shape[0])
        q[block, block] = linalg.solve(eye + pk, eye - pk).T
    return LocalTransform(spec=spec, x=x.copy(), q=q)


def cayley_pullback(transform: LocalTransform, grad_q) -> np.ndarray:
    """Chain dL/dQ to dL/dX through the Cayley map.

    With M = (I - P)^{-1}: G_P = (I + Q)^T grad_Q M^T and
    dL/dX = (G_P - G_P^T)/2, restricted to the block pattern.
    """
    grad_q = linalg.check_square(grad_q, "grad_q")
    if grad_q.shape[0] != transform.spec.dimension:
        raise DimensionMismatchError(
            f"grad_q is {grad_q.shape[0]}x{grad_q.shape[0]}, "
            f"expected {transform.spec.dimension}"
        )
    p = skew_part(transform.x)
    eye = np.eye(transform.spec.dimension)
    # grad_Q M^T solves (I - P) Z = grad_Q^T, then transpose.
    grad_q_mt = linalg.solve(eye - p, grad_q.T).T
    g_p = (eye + transform.q).T @ grad_q_mt
    grad_x = 0.5 * (g_p - g_p.T)
    return apply_block_mask(grad_x, transform.spec)


def identity_transform(spec: BlockSpec) -> LocalTransform:
    """Transform at the shared initialization point X = I (hence Q = I)."""
    return cayley_map(np.eye(spec.dimension), spec)
