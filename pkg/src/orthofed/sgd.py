"""SGD with momentum and (coupled) weight decay.

The update convention is the classic one:
    g <- grad + weight_decay * param
    v <- momentum * v + g
    param <- param - learning_rate * v

``HeadOptimizer`` applies it independently to the classifier and the
transform parameter. Weight decay is applied to the classifier only:
decaying the transform parameter toward zero would bias the derived map
toward the identity, which is not part of the training objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError
from .head import HeadGradients, HeadParams


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        for name in ("learning_rate", "momentum", "weight_decay"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("momentum and weight_decay must be non-negative")


def sgd_step(
    param: np.ndarray,
    grad: np.ndarray,
    velocity: np.ndarray,
    cfg: OptimConfig,
    weight_decay: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One SGD step; returns (new_param, new_velocity)."""
    if param.shape != grad.shape or param.shape != velocity.shape:
        raise DimensionMismatchError(
            f"shape mismatch: param {param.shape}, grad {grad.shape}, "
            f"velocity {velocity.shape}"
        )
    decay = cfg.weight_decay if weight_decay is None else weight_decay
    g = grad + decay * param
    new_velocity = cfg.momentum * velocity + g
    return param - cfg.learning_rate * new_velocity, new_velocity


@dataclass
class HeadOptimizer:
    """Per-client optimizer state for both parameter groups."""

    cfg: OptimConfig
    velocity_classifier: np.ndarray = field(default=None)  # type: ignore[assignment]
    velocity_x: np.ndarray = field(default=None)  # type: ignore[assignment]

    def _ensure_state(self, params: HeadParams) -> None:
        if self.velocity_classifier is None:
            self.velocity_classifier = np.zeros_like(params.classifier)
            self.velocity_x = np.zeros_like(params.transform.x)
        if self.velocity_classifier.shape != params.classifier.shape:
            raise DimensionMismatchError("optimizer state does not match classifier shape")
        if self.velocity_x.shape != params.transform.x.shape:
            raise DimensionMismatchError("optimizer state does not match transform shape")

    def step(
        self, params: HeadParams, grads: HeadGradients, train_transform: bool = True
    ) -> HeadParams:
        """Update both groups and recompute the derived map immediately."""
        self._ensure_state(params)
        classifier, self.velocity_classifier = sgd_step(
            params.classifier, grads.grad_classifier, self.velocity_classifier, self.cfg
        )
        params = params.with_classifier(classifier)
        if train_transform:
            # Gradients honor the block pattern already, so the velocity does too.
            new_x, self.velocity_x = sgd_step(
                params.transform.x, grads.grad_x, self.velocity_x, self.cfg,
                weight_decay=0.0,
            )
            params = params.with_transform(params.transform.replaced(new_x))
        return params
