from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from deci.data import Dataset
from deci.errors import ConfigError, NumericError
from deci.model import ModelConfig, ModelParams, init_params, is_decayed, loss_and_grads, predict_logits
from deci.train.metrics import metrics_from_logits
from deci.train.optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 16
    seed: int = 0
    patience: int = 30  # 0 disables early stopping
    loss_mode: str = "fused"  # or "per_logit"

    def __post_init__(self):
        if not self.lr >= 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError(f"adam betas must lie in (0, 1), got ({self.beta1}, {self.beta2})")
        if self.batch_size < 1 or self.epochs < 0 or self.patience < 0:
            raise ConfigError(f"batch_size >= 1, epochs >= 0, patience >= 0 required (got {self})")
        if self.weight_decay < 0 or self.eps <= 0:
            raise ConfigError("weight_decay must be >= 0 and eps > 0")
        if self.loss_mode not in ("fused", "per_logit"):
            raise ConfigError(f"loss_mode must be 'fused' or 'per_logit', got {self.loss_mode!r}")

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})


@dataclass
class History:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False


def model_config_for(ds: Dataset, base: ModelConfig | None = None, **overrides) -> ModelConfig:
    """Fill the data-dependent shape fields of a model config from ``ds``."""
    shape = dict(series_len=ds.series_len, n_channels=ds.n_channels, n_classes=ds.n_classes)
    if base is None:
        return ModelConfig(**shape, **overrides)
    return base.replace(**shape, **overrides)


def train_model(
    train_set: Dataset,
    val_set: Dataset | None,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    init: ModelParams | None = None,
) -> tuple[ModelParams, History]:
    """Mini-batch Adam on the mean cross-entropy of the fused logits.

    Deterministic given ``cfg.seed``: the seed drives initialisation, the
    per-epoch shuffle and the dropout masks through separate streams.  With a
    validation set and ``patience > 0`` training stops once validation
    accuracy has not improved for ``patience`` epochs and the best
    parameters are returned.
    """
    if len(train_set) == 0:
        raise ConfigError("train_model: empty training set")
    init_ss, shuffle_ss, drop_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    params = init.copy() if init is not None else init_params(model_cfg, np.random.default_rng(init_ss))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)
    X, y = train_set.X, train_set.labels
    state = AdamState()
    history = History()
    best = (-1.0, None)
    stale = 0

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(y))
        total, seen = 0.0, 0
        for bi, start in enumerate(range(0, len(y), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            loss, grads, _ = loss_and_grads(params, X[idx], y[idx], train=True, rng=drop_rng,
                                            loss_mode=cfg.loss_mode)
            if not np.isfinite(loss):
                raise NumericError(f"training diverged: non-finite loss at epoch {epoch}, batch {bi}")
            adam_step(params.tensors, grads, state, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2),
                      eps=cfg.eps, weight_decay=cfg.weight_decay, decay_mask=is_decayed)
            total += loss * len(idx)
            seen += len(idx)
        record = {"epoch": epoch, "train_loss": total / seen}
        if val_set is not None and len(val_set):
            m = metrics_from_logits(predict_logits(val_set.X, params), val_set.labels, model_cfg.n_classes)
            record.update({f"val_{k}": v for k, v in m.as_dict().items()})
        history.epochs.append(record)
        log.debug("epoch %d %s", epoch, record)

        if val_set is not None and cfg.patience > 0:
            acc = record["val_accuracy"]
            if acc > best[0]:
                best, stale = (acc, params.copy()), 0
                history.best_epoch = epoch
            else:
                stale += 1
                if stale >= cfg.patience:
                    history.stopped_early = True
                    break
    if best[1] is not None:
        params = best[1]
    return params, history
