"""Prediction head: transformed, L2-normalized features through a
temperature-scaled linear classifier, with analytic gradients for both
the classifier and the transform parameter.

The forward path for a feature h is
    u = Q h / ||Q h||,   probs = softmax(tau * W u)
where W is the (shared) K x d classifier and Q the client's local map.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import linalg
from .cayley import LinearTransform, LocalTransform
from .errors import DegenerateFeatureError, DimensionMismatchError

# Transformed features with norm at or below this cannot be normalized.
NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class HeadParams:
    """Classifier (shared across clients), local transform, and temperature."""

    classifier: np.ndarray  # (K, d)
    transform: LocalTransform | LinearTransform
    tau: float = 100.0

    def __post_init__(self):
        classifier = linalg.check_matrix(self.classifier, "classifier")
        object.__setattr__(self, "classifier", classifier)
        if classifier.shape[1] != self.transform.spec.dimension:
            raise DimensionMismatchError(
                f"classifier has {classifier.shape[1]} columns, transform dimension "
                f"is {self.transform.spec.dimension}"
            )
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")

    @property
    def class_count(self) -> int:
        return self.classifier.shape[0]

    @property
    def dimension(self) -> int:
        return self.classifier.shape[1]

    def with_classifier(self, classifier: np.ndarray) -> "HeadParams":
        return replace(self, classifier=classifier)

    def with_transform(self, transform) -> "HeadParams":
        return replace(self, transform=transform)


@dataclass(frozen=True)
class HeadGradients:
    grad_classifier: np.ndarray  # (K, d)
    grad_x: np.ndarray  # (d, d), zero outside the block pattern


def _as_feature_batch(params: HeadParams, features) -> tuple[np.ndarray, bool]:
    arr = np.asarray(features, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != params.dimension:
        raise DimensionMismatchError(
            f"features must have {params.dimension} columns, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise DegenerateFeatureError("features contain non-finite values")
    return arr, single


def transformed_unit_features(params: HeadParams, features) -> np.ndarray:
    """Rows Q h / ||Q h|| for a batch of features."""
    arr, _ = _as_feature_batch(params, features)
    transformed = arr @ params.transform.q.T
    norms = np.linalg.norm(transformed, axis=1)
    if np.any(norms <= NORM_FLOOR):
        raise DegenerateFeatureError(
            "transformed feature norm underflow; the local map collapsed an input"
        )
    return transformed / norms[:, None]


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def forward(params: HeadParams, features) -> np.ndarray:
    """Class probabilities for one feature vector or a batch of rows."""
    arr, single = _as_feature_batch(params, features)
    unit = transformed_unit_features(params, arr)
    probs = _softmax_rows(params.tau * (unit @ params.classifier.T))
    return probs[0] if single else probs


def predict(params: HeadParams, features):
    """Argmax class index; ties resolve to the lowest index."""
    probs = forward(params, features)
    if probs.ndim == 1:
        return int(np.argmax(probs))
    return np.argmax(probs, axis=1)


def _check_labels(params: HeadParams, count: int, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] != count:
        raise DimensionMismatchError(
            f"labels must be 1-D with {count} entries, got shape {labels.shape}"
        )
    if labels.size == 0:
        raise ValueError("batch must be non-empty")
    if labels.min() < 0 or labels.max() >= params.class_count:
        raise ValueError(f"labels must lie in [0, {params.class_count})")
    return labels


def loss(params: HeadParams, features, labels) -> float:
    """Mean cross-entropy of the true classes over the batch."""
    arr, _ = _as_feature_batch(params, features)
    labels = _check_labels(params, arr.shape[0], labels)
    unit = transformed_unit_features(params, arr)
    logits = params.tau * (unit @ params.classifier.T)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted[np.arange(arr.shape[0]), labels] - log_norm
    return float(-log_probs.mean())


def gradients(params: HeadParams, features, labels) -> HeadGradients:
    """Analytic batch-mean gradients for the classifier and the transform parameter.

    grad_classifier is the mean of tau * (probs - onehot(y)) u^T; the
    feature-side gradient is pulled through the normalization
    (G_v = (G_u - (u . G_u) u) / ||v||), the linear map v = Q h, and
    finally the transform's own parametrization.
    """
    arr, _ = _as_feature_batch(params, features)
    labels = _check_labels(params, arr.shape[0], labels)
    batch = arr.shape[0]

    transformed = arr @ params.transform.q.T  # rows v = Q h
    norms = np.linalg.norm(transformed, axis=1)
    if np.any(norms <= NORM_FLOOR):
        raise DegenerateFeatureError(
            "transformed feature norm underflow; the local map collapsed an input"
        )
    unit = transformed / norms[:, None]  # rows u

    probs = _softmax_rows(params.tau * (unit @ params.classifier.T))
    delta = probs.copy()
    delta[np.arange(batch), labels] -= 1.0  # rows (r - onehot(y))

    grad_classifier = (params.tau / batch) * (delta.T @ unit)

    grad_unit = params.tau * (delta @ params.classifier)  # rows G_u
    radial = np.sum(unit * grad_unit, axis=1, keepdims=True)
    grad_transformed = (grad_unit - radial * unit) / norms[:, None]  # rows G_v
    grad_q = (grad_transformed.T @ arr) / batch

    grad_x = params.transform.pull_gradient(grad_q)
    return HeadGradients(grad_classifier=grad_classifier, grad_x=grad_x)
