"""Static functional-connectivity baseline and the shuffled-BOLD control."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from deci.errors import ConfigError
from deci.numeric.kernels import softmax, softmax_cross_entropy


class DegenerateROIWarning(UserWarning):
    pass


def pearson_fc(X: np.ndarray) -> np.ndarray:
    """C x C Pearson correlation between the columns of a T x C series.

    Zero-variance ROIs get 0 off the diagonal and 1 on it, with a
    :class:`DegenerateROIWarning`.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 3:
        raise ConfigError(f"pearson_fc needs a T x C matrix with T >= 3, got shape {X.shape}")
    Xc = X - X.mean(axis=0)
    sd = np.sqrt((Xc * Xc).mean(axis=0))
    dead = sd == 0.0
    if dead.any():
        warnings.warn(
            f"zero-variance ROI(s) {np.flatnonzero(dead).tolist()}: correlations set to 0",
            DegenerateROIWarning,
            stacklevel=2,
        )
    Z = Xc / np.where(dead, 1.0, sd)
    fc = (Z.T @ Z) / X.shape[0]
    fc = np.clip(0.5 * (fc + fc.T), -1.0, 1.0)
    fc[dead, :] = 0.0
    fc[:, dead] = 0.0
    np.fill_diagonal(fc, 1.0)
    return fc


def shuffle_bold(X: np.ndarray, perm) -> np.ndarray:
    """Reorder time points with one permutation shared by every ROI."""
    X = np.asarray(X)
    perm = np.asarray(perm)
    T = X.shape[0]
    if perm.shape != (T,) or not np.array_equal(np.sort(perm), np.arange(T)):
        raise ConfigError(f"shuffle_bold: not a permutation of 0..{T - 1}")
    return X[perm]


def fc_features(fc: np.ndarray) -> np.ndarray:
    """Strict upper triangle, row-major: (0,1), (0,2), ..., (1,2), ..."""
    i, j = np.triu_indices(fc.shape[0], k=1)
    return fc[i, j]


@dataclass
class LogisticModel:
    W: np.ndarray  # (F, V)
    b: np.ndarray  # (V,)

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features) @ self.W + self.b

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.decision_function(features))


def logistic_loss_grad(W, b, features, labels, l2: float):
    """Mean cross-entropy plus ``l2/2 * ||W||^2``, and its gradient."""
    n = features.shape[0]
    losses, g = softmax_cross_entropy(features @ W + b, labels)
    loss = losses.mean() + 0.5 * l2 * np.sum(W * W)
    gW = features.T @ g / n + l2 * W
    gb = g.mean(axis=0)
    return loss, gW, gb


def logistic_fc_fit(
    features,
    labels,
    l2: float = 1e-3,
    epochs: int = 500,
    lr: float = 0.5,
    rng: np.random.Generator | int | None = 0,
    n_classes: int | None = None,
) -> LogisticModel:
    """Multinomial logistic regression by full-batch gradient descent.

    The L2 term is applied as a proximal shrink after each data step, which
    stays stable however large ``l2`` is.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    if classes.size < 2:
        raise ConfigError("logistic_fc_fit: training labels contain a single class")
    V = int(n_classes if n_classes is not None else y.max() + 1)
    rng = np.random.default_rng(rng)
    W = 0.01 * rng.standard_normal((X.shape[1], V))
    b = np.zeros(V)
    for _ in range(epochs):
        _, gW, gb = logistic_loss_grad(W, b, X, y, 0.0)
        W = (W - lr * gW) / (1.0 + lr * l2)
        b = b - lr * gb
    return LogisticModel(W, b)
