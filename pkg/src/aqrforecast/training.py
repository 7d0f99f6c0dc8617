"""Minibatch Adam training with early stopping on validation pinball loss.

Deterministic by construction: one generator seeded from the config
drives every epoch's shuffle, batches are visited in shuffled order with
the final short batch kept, and the returned parameters are a snapshot
of the epoch with the lowest validation loss (the untrained parameters
count as epoch 0, so a run that never improves returns them unchanged).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError, TrainingError
from .model import AqrParams, ModelHyper, batch_loss, init_params, loss_and_gradients
from .pipeline import SampleBatch

__all__ = ["TrainConfig", "TrainReport", "filter_trainable", "train"]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 20
    weight_decay: float = 0.0
    lr_decay: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise TrainingError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise TrainingError("Adam decay rates must lie in [0, 1)")
        if self.eps <= 0:
            raise TrainingError("eps must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise TrainingError("batch_size and max_epochs must be >= 1")
        if self.patience < 0:
            raise TrainingError("patience must be >= 0")
        if self.weight_decay < 0:
            raise TrainingError("weight_decay must be >= 0")
        if not 0.0 < self.lr_decay <= 1.0:
            raise TrainingError("lr_decay must lie in (0, 1]")


@dataclass
class TrainReport:
    epochs_run: int
    best_epoch: int
    best_val_loss: float
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    stopped_early: bool = False


def filter_trainable(batch: SampleBatch) -> SampleBatch:
    """Drop samples whose target is NA; features may still contain NAs."""
    keep = ~np.isnan(batch.targets)
    return batch.subset(np.flatnonzero(keep))


def _check_batch(batch: SampleBatch, hyper: ModelHyper, name: str):
    if len(batch) == 0:
        raise TrainingError(f"{name} batch is empty after dropping NA targets")
    if batch.features.shape[1] != hyper.n_lags:
        raise TrainingError(
            f"{name} batch has {batch.features.shape[1]} lags, model expects {hyper.n_lags}"
        )
    if batch.lead != hyper.lead:
        raise TrainingError(
            f"{name} batch was built for lead {batch.lead}, model expects {hyper.lead}"
        )


def train(
    train_batch: SampleBatch,
    val_batch: SampleBatch,
    hyper: ModelHyper,
    config: TrainConfig = TrainConfig(),
) -> tuple[AqrParams, TrainReport]:
    train_batch = filter_trainable(train_batch)
    val_batch = filter_trainable(val_batch)
    _check_batch(train_batch, hyper, "train")
    _check_batch(val_batch, hyper, "validation")

    params = init_params(hyper)
    rng = np.random.default_rng(config.seed)
    n = len(train_batch)

    state_m = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}
    state_v = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}
    step = 0

    # best_epoch indexes the recorded curves: val_losses[best_epoch] is the
    # minimum, and the returned parameters are the snapshot from that epoch
    best_val = np.inf
    best_params = params.copy()
    best_epoch = 0
    report = TrainReport(epochs_run=0, best_epoch=0, best_val_loss=best_val)
    since_best = 0

    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        lr = config.lr * config.lr_decay**epoch
        for lo in range(0, n, config.batch_size):
            minibatch = train_batch.subset(order[lo : lo + config.batch_size])
            try:
                _, grads = loss_and_gradients(minibatch, params)
            except ModelError as exc:
                raise TrainingError(f"training diverged at epoch {epoch}: {exc}") from exc
            step += 1
            b1c = 1.0 - config.beta1**step
            b2c = 1.0 - config.beta2**step
            for name, arr in params.named_arrays():
                g = grads[name]
                if config.weight_decay > 0:
                    g = g + config.weight_decay * arr
                state_m[name] = config.beta1 * state_m[name] + (1 - config.beta1) * g
                state_v[name] = config.beta2 * state_v[name] + (1 - config.beta2) * g * g
                arr -= lr * (state_m[name] / b1c) / (
                    np.sqrt(state_v[name] / b2c) + config.eps
                )

        train_loss = batch_loss(train_batch, params)
        val_loss = batch_loss(val_batch, params)
        if not np.isfinite(train_loss) or not np.isfinite(val_loss):
            raise TrainingError(f"training diverged at epoch {epoch}: loss is not finite")
        report.train_losses.append(train_loss)
        report.val_losses.append(val_loss)
        report.epochs_run = epoch + 1
        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                report.stopped_early = True
                break

    report.best_epoch = best_epoch
    report.best_val_loss = best_val
    return best_params, report
