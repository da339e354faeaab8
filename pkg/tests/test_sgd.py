from __future__ import annotations

import numpy as np
import pytest

from orthofed.cayley import BlockSpec, cayley_map, identity_transform
from orthofed.errors import DimensionMismatchError
from orthofed.head import HeadGradients, HeadParams
from orthofed.sgd import HeadOptimizer, OptimConfig, sgd_step


class TestSgdStep:
    def test_vanilla(self):
        cfg = OptimConfig(learning_rate=0.5)
        param, velocity = sgd_step(np.ones(3), np.full(3, 2.0), np.zeros(3), cfg)
        np.testing.assert_allclose(param, np.zeros(3))
        np.testing.assert_allclose(velocity, np.full(3, 2.0))

    def test_zero_gradient_fixed_point(self):
        cfg = OptimConfig(learning_rate=0.1, momentum=0.9)
        param, velocity = np.ones((2, 2)), np.zeros((2, 2))
        for _ in range(2):
            param, velocity = sgd_step(param, np.zeros((2, 2)), velocity, cfg)
        np.testing.assert_array_equal(param, np.ones((2, 2)))
        np.testing.assert_array_equal(velocity, np.zeros((2, 2)))

    def test_momentum_hand_recursion(self):
        # v1 = 1, p1 = 0.9; v2 = 1.9, p2 = 0.71
        cfg = OptimConfig(learning_rate=0.1, momentum=0.9)
        param, velocity = np.array([[1.0]]), np.zeros((1, 1))
        param, velocity = sgd_step(param, np.ones((1, 1)), velocity, cfg)
        assert param[0, 0] == pytest.approx(0.9)
        param, velocity = sgd_step(param, np.ones((1, 1)), velocity, cfg)
        assert param[0, 0] == pytest.approx(0.71)

    def test_two_half_steps_equal_one_full_step(self):
        grad = np.array([[3.0, -1.0]])
        start = np.array([[1.0, 2.0]])
        full, _ = sgd_step(start, grad, np.zeros((1, 2)), OptimConfig(learning_rate=0.2))
        half_cfg = OptimConfig(learning_rate=0.1)
        halfway, velocity = sgd_step(start, grad, np.zeros((1, 2)), half_cfg)
        twice, _ = sgd_step(halfway, grad, np.zeros((1, 2)), half_cfg)
        np.testing.assert_allclose(twice, full, atol=1e-15)

    def test_coupled_weight_decay(self):
        cfg = OptimConfig(learning_rate=1.0, weight_decay=0.1)
        param, _ = sgd_step(np.ones(2), np.zeros(2), np.zeros(2), cfg)
        np.testing.assert_allclose(param, np.full(2, 0.9))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            sgd_step(np.ones(2), np.ones(3), np.zeros(2), OptimConfig(learning_rate=0.1))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            OptimConfig(learning_rate=float("nan"))
        with pytest.raises(ValueError):
            OptimConfig(learning_rate=0.1, momentum=-0.5)


class TestHeadOptimizer:
    def _head(self, rng, d=6, k=3):
        return HeadParams(
            classifier=rng.normal(size=(k, d)),
            transform=identity_transform(BlockSpec(d, 2)),
            tau=5.0,
        )

    def test_transform_stays_consistent_after_step(self, rng):
        head = self._head(rng)
        optimizer = HeadOptimizer(OptimConfig(learning_rate=0.05, momentum=0.9))
        spec = head.transform.spec
        for _ in range(5):
            grads = HeadGradients(
                grad_classifier=rng.normal(size=(3, 6)),
                grad_x=head.transform.pull_gradient(rng.normal(size=(6, 6))),
            )
            head = optimizer.step(head, grads)
            recomputed = cayley_map(head.transform.x, spec)
            assert np.max(np.abs(recomputed.q - head.transform.q)) <= 1e-12
            residual = np.linalg.norm(head.transform.q.T @ head.transform.q - np.eye(6))
            assert residual <= 1e-8 * 6

    def test_weight_decay_only_touches_classifier(self, rng):
        head = self._head(rng)
        optimizer = HeadOptimizer(OptimConfig(learning_rate=0.1, weight_decay=0.5))
        zero = HeadGradients(grad_classifier=np.zeros((3, 6)), grad_x=np.zeros((6, 6)))
        before_classifier = head.classifier.copy()
        before_x = head.transform.x.copy()
        head = optimizer.step(head, zero)
        assert np.max(np.abs(head.classifier - before_classifier)) > 0
        np.testing.assert_array_equal(head.transform.x, before_x)

    def test_frozen_transform_when_not_trained(self, rng):
        head = self._head(rng)
        optimizer = HeadOptimizer(OptimConfig(learning_rate=0.1))
        grads = HeadGradients(
            grad_classifier=rng.normal(size=(3, 6)), grad_x=rng.normal(size=(6, 6))
        )
        head = optimizer.step(head, grads, train_transform=False)
        np.testing.assert_array_equal(head.transform.q, np.eye(6))

    def test_update_is_masked_to_block_pattern(self, rng):
        head = self._head(rng)
        optimizer = HeadOptimizer(OptimConfig(learning_rate=0.1))
        grads = HeadGradients(
            grad_classifier=np.zeros((3, 6)),
            grad_x=head.transform.pull_gradient(rng.normal(size=(6, 6))),
        )
        head = optimizer.step(head, grads)
        mask = head.transform.spec.pattern_mask()
        off_pattern = head.transform.x[~mask]
        np.testing.assert_array_equal(off_pattern, np.zeros_like(off_pattern))
