from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from loguru import logger

from .Electrodogram import Electrodogram
from .exceptions import EmptyDatasetError, NonFiniteError, TrainingDivergedError
from .metrics import metrics
from .models import ModelConfig, TrainingConfig
from .neural_coder import NeuralCoder
from .Tensor import Tensor, no_grad
from .Types import FilePath, FloatArray
from .utils import time_execution, write_text_atomic

HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "lr")


class TrainingExample(NamedTuple):
    features: FloatArray
    target: Electrodogram
    name: str = ""


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False

    @property
    def best_val_loss(self) -> float | None:
        if self.best_epoch is None:
            return None
        return self.records[self.best_epoch - 1].val_loss

    @property
    def learning_rates(self) -> list[float]:
        return [r.lr for r in self.records]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for r in self.records:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.lr)])
        return buffer.getvalue()

    def save(self, path: FilePath) -> Path:
        return write_text_atomic(path, self.to_csv())


@dataclass
class TrainingResult:
    coder: NeuralCoder
    history: TrainingHistory


class Adam:
    """Adam with bias-corrected first and second moments, updating tensors in place"""

    def __init__(self, parameters: dict[str, Tensor], lr: float, beta1: float, beta2: float, eps: float) -> None:
        self.parameters = parameters
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self._m = {name: np.zeros_like(p.data) for name, p in parameters.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in parameters.items()}

    def step(self) -> None:
        self.steps += 1
        correction1 = 1 - self.beta1**self.steps
        correction2 = 1 - self.beta2**self.steps

        for name, p in self.parameters.items():
            if p.grad is None:
                continue
            m, v = self._m[name], self._v[name]
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * np.square(p.grad)
            p.data -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


class PlateauLearningRate:
    """multiply the learning rate by `factor` after `patience` epochs without improvement"""

    def __init__(self, initial_lr: float, patience: int, factor: float, min_delta: float) -> None:
        self.lr = initial_lr
        self.patience = patience
        self.factor = factor
        self.min_delta = min_delta
        self.best = np.inf
        self.count = 0

    def step(self, loss: float) -> float:
        if loss < self.best - self.min_delta:
            self.best = loss
            self.count = 0
        else:
            self.count += 1

        if self.count >= self.patience:
            self.lr *= self.factor
            self.count = 0
            logger.info(f"Validation loss stagnated for {self.patience} epochs, learning rate lowered to {self.lr:.3g}")
        return self.lr


class EarlyStopping:
    """report a stop once `patience` consecutive epochs bring no improvement over the best loss"""

    def __init__(self, patience: int, min_delta: float) -> None:
        self.patience = patience
        self.min_delta = min_delta
        self.best = np.inf
        self.count = 0

    def step(self, loss: float) -> bool:
        """True when the loss is a new best"""
        if loss < self.best - self.min_delta:
            self.best = loss
            self.count = 0
            return True
        self.count += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.count >= self.patience


def evaluate_loss(
    coder: NeuralCoder, dataset: Sequence[TrainingExample], loss_weight: float, selected_only: bool = False
) -> float:
    """mean combined loss over a dataset without recording gradients"""
    with no_grad():
        losses = [
            coder.loss(example.features, example.target, loss_weight, selected_only).item() for example in dataset
        ]
    return float(np.mean(losses))


def _check_finite(loss: float, epoch: int) -> None:
    if not np.isfinite(loss):
        raise TrainingDivergedError(epoch, loss)


def _train_epoch(
    coder: NeuralCoder,
    optimizer: Adam,
    dataset: Sequence[TrainingExample],
    config: TrainingConfig,
    rng: np.random.Generator,
    epoch: int,
) -> float:
    order = rng.permutation(len(dataset))
    losses: list[float] = []

    for start in range(0, len(order), config.batch_size):
        batch = order[start : start + config.batch_size]
        coder.zero_grad()
        for index in batch:
            example = dataset[int(index)]
            try:
                loss = coder.loss(example.features, example.target, config.loss_weight, config.masked_magnitude_loss)
                losses.append(loss.item())
                coder.backward(loss * (1.0 / len(batch)))
            except NonFiniteError as e:
                raise TrainingDivergedError(epoch, float("nan")) from e
        optimizer.step()

    train_loss = float(np.mean(losses))
    _check_finite(train_loss, epoch)
    return train_loss


@time_execution
def train(
    train_set: Sequence[TrainingExample],
    val_set: Sequence[TrainingExample],
    config: TrainingConfig,
    model_config: ModelConfig | None = None,
    coder: NeuralCoder | None = None,
) -> TrainingResult:
    """
    Adam training with a plateau learning-rate schedule and early stopping on the
    validation loss. The returned coder holds the lowest-validation-loss snapshot.
    """
    if not train_set or not val_set:
        raise EmptyDatasetError(
            f"Training needs examples in both splits, got {len(train_set)} train / {len(val_set)} val"
        )

    coder = coder or NeuralCoder(model_config or ModelConfig(), seed=config.rng_seed)
    rng = np.random.default_rng(config.rng_seed)
    optimizer = Adam(coder.parameters, config.initial_lr, config.adam_beta1, config.adam_beta2, config.adam_eps)
    schedule = PlateauLearningRate(config.initial_lr, config.lr_patience, config.lr_factor, config.min_delta)
    stopper = EarlyStopping(config.early_stop_patience, config.min_delta)

    history = TrainingHistory()
    best_state = coder.state_dict()
    logger.info(f"Training {coder!r} on {len(train_set)} files, validating on {len(val_set)}")

    for epoch in range(1, config.max_epochs + 1):
        lr = schedule.lr
        optimizer.lr = lr
        train_loss = _train_epoch(coder, optimizer, train_set, config, rng, epoch)
        try:
            val_loss = evaluate_loss(coder, val_set, config.loss_weight, config.masked_magnitude_loss)
        except NonFiniteError as e:
            raise TrainingDivergedError(epoch, float("nan")) from e
        _check_finite(val_loss, epoch)

        history.records.append(EpochRecord(epoch, train_loss, val_loss, lr))
        metrics.register_epoch(train_loss, val_loss, lr)
        logger.info(f"Epoch {epoch}: train loss {train_loss:.6f}, val loss {val_loss:.6f}, lr {lr:.3g}")

        if stopper.step(val_loss):
            best_state = coder.state_dict()
            history.best_epoch = epoch
        schedule.step(val_loss)

        if stopper.should_stop:
            history.stopped_early = True
            logger.info(f"Early stopping after epoch {epoch}, best epoch {history.best_epoch}")
            break

    coder.load_state_dict(best_state)
    return TrainingResult(coder, history)
