from __future__ import annotations

import numpy as np
import pytest

from orthofed.cayley import BlockSpec, cayley_map


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_orthogonal(dimension: int, rng: np.random.Generator) -> np.ndarray:
    """Test-side orthogonal sampler, independent of the code under test."""
    q, r = np.linalg.qr(rng.normal(size=(dimension, dimension)))
    return q * np.sign(np.diag(r))


def random_cayley_transform(dimension: int, rng: np.random.Generator, scale: float = 1.0):
    x = scale * rng.uniform(-1.0, 1.0, size=(dimension, dimension))
    return cayley_map(x, BlockSpec(dimension))


def relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(expected)), 1e-300)
    return float(np.linalg.norm(actual - expected)) / denom
