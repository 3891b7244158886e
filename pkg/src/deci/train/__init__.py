from deci.numeric.kernels import softmax_cross_entropy
from deci.train.loop import History, TrainConfig, model_config_for, train_model
from deci.train.metrics import (
    METRICS,
    FoldMetrics,
    MetricsReport,
    auroc_binary,
    classification_metrics,
    metrics_from_logits,
)
from deci.train.optim import AdamState, adam_step
from deci.train.protocol import (
    DeciFitter,
    FCLogisticFitter,
    ablation_suite,
    cross_validate,
    evaluate,
    shuffle_dataset,
)

__all__ = [
    "METRICS",
    "AdamState",
    "DeciFitter",
    "FCLogisticFitter",
    "FoldMetrics",
    "History",
    "MetricsReport",
    "TrainConfig",
    "ablation_suite",
    "adam_step",
    "auroc_binary",
    "classification_metrics",
    "cross_validate",
    "evaluate",
    "metrics_from_logits",
    "model_config_for",
    "shuffle_dataset",
    "softmax_cross_entropy",
    "train_model",
]
