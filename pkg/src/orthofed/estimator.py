"""Scikit-learn estimator wrapping single-client training.

``OrthogonalTransformClassifier`` fits the same head a federated client
trains (learnable orthogonal input map + temperature-scaled linear
classifier over L2-normalized features), so it doubles as the
centralized/local-only baseline and composes with sklearn tooling
(pipelines, cross-validation, ``clone``).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .cayley import BlockSpec
from .federation import VARIANTS, initial_transform, run_local_epochs, trains_transform
from .head import HeadParams, forward
from .rng import SplitMix64, derive_seed
from .sgd import HeadOptimizer, OptimConfig


class OrthogonalTransformClassifier(BaseEstimator, ClassifierMixin):
    """Linear classifier over orthogonally transformed, normalized features.

    Parameters
    ----------
    tau : softmax temperature applied to the cosine logits.
    learning_rate, momentum, weight_decay : SGD settings; weight decay
        acts on the classifier only.
    epochs, batch_size : training schedule over the fitted data.
    block_count : number of independent diagonal blocks in the transform.
    variant : "orthogonal" (Cayley map), "unconstrained" (raw linear map),
        or "identity_local" (transform frozen at I). "all_global" trains
        like "orthogonal" here since there is no federation to share with.
    init_classifier : optional (K, d) array used instead of random rows.
    seed : controls initialization and batch shuffling.
    """

    def __init__(
        self,
        tau: float = 100.0,
        learning_rate: float = 1e-3,
        momentum: float = 5e-4,
        weight_decay: float = 5e-4,
        epochs: int = 50,
        batch_size: int = 32,
        block_count: int = 1,
        variant: str = "orthogonal",
        init_classifier=None,
        seed: int = 0,
    ):
        self.tau = tau
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.block_count = block_count
        self.variant = variant
        self.init_classifier = init_classifier
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        self.classes_, y_indices = np.unique(y, return_inverse=True)
        n_features = X.shape[1]
        self.n_features_in_ = n_features
        class_count = len(self.classes_)

        if self.init_classifier is not None:
            classifier = check_array(self.init_classifier).astype(np.float64)
            if classifier.shape != (class_count, n_features):
                raise ValueError(
                    f"init_classifier has shape {classifier.shape}, expected "
                    f"({class_count}, {n_features})"
                )
        else:
            rng = SplitMix64(derive_seed(self.seed, "classifier"))
            classifier = 0.01 * rng.normals(class_count * n_features).reshape(
                class_count, n_features
            )

        spec = BlockSpec(dimension=n_features, block_count=self.block_count)
        head = HeadParams(
            classifier=classifier,
            transform=initial_transform(spec, self.variant),
            tau=self.tau,
        )
        optimizer = HeadOptimizer(
            OptimConfig(
                learning_rate=self.learning_rate,
                momentum=self.momentum,
                weight_decay=self.weight_decay,
            )
        )
        head = run_local_epochs(
            head,
            optimizer,
            np.asarray(X, dtype=np.float64),
            y_indices.astype(np.int64),
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=derive_seed(self.seed, "fit"),
            train_transform=trains_transform(self.variant),
        )
        self.head_ = head
        self.classifier_ = head.classifier
        self.transform_ = head.transform
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "head_")
        X = check_array(X)
        return forward(self.head_, np.asarray(X, dtype=np.float64))

    def predict(self, X):
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]

    def transform(self, X):
        """Apply the learned local map (rows X @ Q^T)."""
        check_is_fitted(self, "head_")
        X = check_array(X)
        return np.asarray(X, dtype=np.float64) @ self.head_.transform.q.T
