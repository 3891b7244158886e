from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from deci.numeric.kernels import softmax

METRICS = ("accuracy", "precision_macro", "recall_macro", "f1_macro", "auroc_macro")


class DegenerateAUROCWarning(UserWarning):
    pass


def auroc_binary(scores, positives) -> float:
    """Mann-Whitney AUROC: (concordant pairs + ties/2) / (n_pos * n_neg).

    Returns 0.5 when either side is empty.
    """
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    ranks = rankdata(scores)  # average ranks, so ties count one half
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def argmax_lowest(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index (numpy's behaviour)."""
    return np.argmax(scores, axis=-1)


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def _safe_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise a/b with 0/0 := 0."""
    out = np.zeros_like(a, dtype=np.float64)
    np.divide(a, b, out=out, where=b != 0)
    return out


@dataclass
class FoldMetrics:
    accuracy: float
    precision_macro: float
    recall_macro: float
    f1_macro: float
    auroc_macro: float
    precision: np.ndarray = field(repr=False)
    recall: np.ndarray = field(repr=False)
    f1: np.ndarray = field(repr=False)
    auroc: np.ndarray = field(repr=False)

    def as_dict(self) -> dict[str, float]:
        return {m: float(getattr(self, m)) for m in METRICS}


def classification_metrics(y_true, y_pred, n_classes: int, scores=None) -> FoldMetrics:
    """Accuracy and macro P/R/F1 (0/0 := 0); macro one-vs-rest AUROC from ``scores``.

    ``scores`` are class probabilities ``(n, V)``; without them AUROC is NaN.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    cm = confusion_matrix(y_true, y_pred, n_classes)
    tp = np.diag(cm).astype(np.float64)
    precision = _safe_div(tp, cm.sum(axis=0).astype(np.float64))
    recall = _safe_div(tp, cm.sum(axis=1).astype(np.float64))
    f1 = _safe_div(2 * precision * recall, precision + recall)

    auroc = np.full(n_classes, np.nan)
    if scores is not None:
        scores = np.asarray(scores, dtype=np.float64)
        for c in range(n_classes):
            pos = y_true == c
            if pos.all() or not pos.any():
                warnings.warn(
                    f"class {c} is {'absent' if not pos.any() else 'the only class'} "
                    "in this fold; its AUROC is set to 0.5",
                    DegenerateAUROCWarning,
                    stacklevel=2,
                )
            auroc[c] = auroc_binary(scores[:, c], pos)
    return FoldMetrics(
        accuracy=float(np.mean(y_true == y_pred)),
        precision_macro=float(precision.mean()),
        recall_macro=float(recall.mean()),
        f1_macro=float(f1.mean()),
        auroc_macro=float(auroc.mean()),
        precision=precision,
        recall=recall,
        f1=f1,
        auroc=auroc,
    )


def metrics_from_logits(logits: np.ndarray, y_true, n_classes: int) -> FoldMetrics:
    return classification_metrics(y_true, argmax_lowest(logits), n_classes, softmax(logits))


@dataclass
class FoldRecord:
    run: int
    fold: int
    metrics: FoldMetrics


@dataclass
class MetricsReport:
    """Per-fold metrics across runs plus their mean and (population) std."""

    folds: list[FoldRecord]
    label: str = ""

    def values(self, metric: str) -> np.ndarray:
        return np.array([getattr(r.metrics, metric) for r in self.folds])

    @property
    def mean(self) -> dict[str, float]:
        return {m: float(self.values(m).mean()) for m in METRICS}

    @property
    def std(self) -> dict[str, float]:
        return {m: float(self.values(m).std()) for m in METRICS}

    def summary_cells(self, digits: int = 2) -> dict[str, str]:
        """``mean_std`` strings in percent, as in benchmark tables."""
        return {
            m: f"{100 * self.mean[m]:.{digits}f} ± {100 * self.std[m]:.{digits}f}" for m in METRICS
        }
