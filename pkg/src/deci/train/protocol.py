"""Cross-validation, ablation and kernel-sweep protocols."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from deci.baselines import fc_features, logistic_fc_fit, pearson_fc, shuffle_bold
from deci.data import Dataset, SubjectSeries, stratified_kfold
from deci.errors import ConfigError
from deci.model import ModelConfig, ModelParams, predict_logits
from deci.train.loop import TrainConfig, model_config_for, train_model
from deci.train.metrics import FoldMetrics, FoldRecord, MetricsReport, metrics_from_logits

Predictor = Callable[[np.ndarray], np.ndarray]


class Fitter(Protocol):
    def __call__(self, train_set: Dataset, seed: int) -> Predictor: ...


def evaluate(params: ModelParams, test_set: Dataset) -> FoldMetrics:
    """Eval-mode metrics of a trained model on ``test_set``."""
    if len(test_set) == 0:
        raise ConfigError("evaluate: empty test set")
    logits = predict_logits(test_set.X, params)
    return metrics_from_logits(logits, test_set.labels, params.config.n_classes)


def fold_seed(base: int, run: int, fold: int) -> int:
    return int(np.random.SeedSequence([base, run, fold]).generate_state(1)[0])


@dataclass
class DeciFitter:
    """Trains DeCI; with early stopping a stratified fifth of the training
    folds is held out for validation."""

    model_cfg: ModelConfig
    train_cfg: TrainConfig

    def fit(self, train_set: Dataset, seed: int) -> ModelParams:
        cfg = model_config_for(train_set, self.model_cfg)
        tcfg = self.train_cfg.replace(seed=seed)
        val = None
        if tcfg.patience > 0:
            split = stratified_kfold(train_set.labels, min(5, len(train_set)), seed)
            val = train_set.subset(split.test_indices(0))
            train_set = train_set.subset(split.train_indices(0))
        params, _ = train_model(train_set, val, cfg, tcfg)
        return params

    def __call__(self, train_set: Dataset, seed: int) -> Predictor:
        params = self.fit(train_set, seed)
        return lambda X: predict_logits(X, params)


def fc_feature_matrix(X: np.ndarray) -> np.ndarray:
    return np.stack([fc_features(pearson_fc(x)) for x in X])


@dataclass
class FCLogisticFitter:
    l2: float = 1e-3
    epochs: int = 500
    lr: float = 0.5

    def __call__(self, train_set: Dataset, seed: int) -> Predictor:
        model = logistic_fc_fit(
            fc_feature_matrix(train_set.X), train_set.labels, l2=self.l2, epochs=self.epochs,
            lr=self.lr, rng=seed, n_classes=train_set.n_classes,
        )
        return lambda X: model.decision_function(fc_feature_matrix(X))


def shuffle_dataset(ds: Dataset, seed: int) -> Dataset:
    """Shuffled-BOLD control: a fresh time permutation per subject, shared by its ROIs."""
    rng = np.random.default_rng(seed)
    subjects = [
        SubjectSeries(s.subject_id, shuffle_bold(s.X, rng.permutation(ds.series_len)), s.label, s.degenerate)
        for s in ds.subjects
    ]
    return Dataset(subjects, ds.n_classes, ds.name + "-shuffled")


def _run_fold(args) -> FoldRecord:
    dataset, fitter, run, fold, train_idx, test_idx, base_seed = args
    train, test = dataset.subset(train_idx), dataset.subset(test_idx)
    predict = fitter(train, fold_seed(base_seed, run, fold))
    logits = predict(test.X)
    return FoldRecord(run, fold, metrics_from_logits(logits, test.labels, dataset.n_classes))


def cross_validate(
    dataset: Dataset,
    fitter: Fitter,
    k: int = 5,
    runs: int = 5,
    seed: int = 0,
    jobs: int = 1,
    label: str = "",
) -> MetricsReport:
    """Run r uses ``stratified_kfold(seed=r)``; every fold trains a fresh model.

    With ``jobs > 1`` folds run in worker processes; records come back in
    (run, fold) order regardless.
    """
    tasks = []
    for run in range(runs):
        split = stratified_kfold(dataset.labels, k, seed=run)
        for fold in range(k):
            tasks.append((dataset, fitter, run, fold, split.train_indices(fold), split.test_indices(fold), seed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_fold, tasks))
    else:
        records = [_run_fold(t) for t in tasks]
    return MetricsReport(records, label)


def ablation_suite(
    dataset: Dataset,
    base_cfg: ModelConfig,
    train_cfg: TrainConfig,
    k: int = 5,
    runs: int = 5,
    kernels=(),
    seed: int = 0,
    jobs: int = 1,
) -> list[MetricsReport]:
    """Cross-validate the four branch settings, then each kernel size with both branches."""
    rows = []
    for branches in ("none", "cycle", "drift", "both"):
        cfg = base_cfg.with_branches(branches)
        rows.append(cross_validate(dataset, DeciFitter(cfg, train_cfg), k, runs, seed, jobs, label=branches))
    full = base_cfg.with_branches("both")
    for K in kernels:
        cfg = full.replace(kernel_size=int(K))
        rows.append(cross_validate(dataset, DeciFitter(cfg, train_cfg), k, runs, seed, jobs, label=f"K={K}"))
    return rows
