"""Mini-batch SGD training with binary cross-entropy."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from cellattn.core import (
    ParameterSet,
    Tensor,
    backward,
    bce_loss,
    one_hot,
    sgd_step,
    softmax,
)
from cellattn.data import DEFAULT_AUGMENTS, parse_augment_kind
from cellattn.diagnostics import TrainingProfiler
from cellattn.models import EncoderConfig, forward_logits, init_encoder
from cellattn.utils import ConfigurationError, InputError, NumericalError, derive_rng


_logger = logging.getLogger("cellattn.evaluation")

LONG_REGIME_EPOCHS = 100

_NULL_PROFILER = TrainingProfiler()


class EpochRegime(str, Enum):
    """Short (< 100 epochs) and long (>= 100 epochs) training runs."""

    SHORT = "short"
    LONG = "long"


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser and augmentation settings of one training run."""

    epochs: int = 50
    lr: float = 0.001
    batch_size: int = 8
    seed: int = 0
    augment_factor: int = 2
    augment_kinds: tuple[str, ...] = tuple(k.value for k in DEFAULT_AUGMENTS)
    shuffle: bool = True

    def __post_init__(self) -> None:
        kinds = self.augment_kinds
        if isinstance(kinds, str):
            kinds = tuple(k for k in kinds.split(",") if k.strip())
        object.__setattr__(
            self, "augment_kinds", tuple(parse_augment_kind(k).value for k in kinds)
        )
        if self.epochs < 1:
            msg = f"epochs must be >= 1, got {self.epochs}"
            raise ConfigurationError(msg)
        if not math.isfinite(self.lr) or self.lr < 0:
            msg = f"lr must be a finite non-negative number, got {self.lr}"
            raise ConfigurationError(msg)
        if self.batch_size < 1:
            msg = f"batch_size must be >= 1, got {self.batch_size}"
            raise ConfigurationError(msg)
        if self.augment_factor < 0:
            msg = f"augment_factor must be >= 0, got {self.augment_factor}"
            raise ConfigurationError(msg)

    @property
    def regime(self) -> EpochRegime:
        if self.epochs < LONG_REGIME_EPOCHS:
            return EpochRegime.SHORT
        return EpochRegime.LONG

    def to_dict(self) -> dict[str, Any]:
        return {
            "epochs": self.epochs,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "augment_factor": self.augment_factor,
            "augment_kinds": list(self.augment_kinds),
            "shuffle": self.shuffle,
            "regime": self.regime.value,
        }


@dataclass
class TrainResult:
    """Final parameters and the per-epoch mean loss."""

    params: ParameterSet
    loss_trace: list[float] = field(default_factory=list)
    steps: int = 0


def _check_dataset(
    images: np.ndarray, labels: np.ndarray, config: EncoderConfig
) -> None:
    if len(images) == 0:
        msg = "training set is empty"
        raise InputError(msg)
    if images.ndim != 4 or images.shape[1:] != config.image_shape:
        msg = f"{config.name} trains on {config.image_shape} images, got {images.shape}"
        raise InputError(msg)
    if labels.shape != (len(images),):
        msg = f"{len(images)} images but labels of shape {labels.shape}"
        raise InputError(msg)


def train_model(
    config: EncoderConfig,
    train: TrainConfig,
    images: np.ndarray,
    labels: np.ndarray,
    params: ParameterSet | None = None,
    profiler: TrainingProfiler | None = None,
) -> TrainResult:
    """Train with SGD on BCE; ``params`` defaults to a fresh init from ``train.seed``.

    Raises:
        InputError: Empty or inconsistent dataset.
        NumericalError: The loss became NaN or infinite.
    """
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    _check_dataset(images, labels, config)
    if params is None:
        params = init_encoder(config, train.seed)
    targets = one_hot(labels, config.num_classes)
    order_rng = derive_rng(train.seed, "shuffle")
    dropout_rng = derive_rng(train.seed, "dropout")
    n = len(images)
    result = TrainResult(params)
    _logger.info(
        "Training %s on %d images: %d epochs, lr=%g, batch=%d",
        config.name,
        n,
        train.epochs,
        train.lr,
        train.batch_size,
    )
    for epoch in range(train.epochs):
        order = order_rng.permutation(n) if train.shuffle else np.arange(n)
        losses = []
        for batch, start in enumerate(range(0, n, train.batch_size)):
            idx = order[start : start + train.batch_size]
            with (profiler or _NULL_PROFILER).time_step(epoch, batch, len(idx)) as slot:
                logits = forward_logits(
                    Tensor(images[idx]), config, params, training=True, rng=dropout_rng
                )
                loss = bce_loss(softmax(logits, axis=-1), targets[idx])
                value = loss.item()
                slot["loss"] = value
                if not math.isfinite(value):
                    raise NumericalError(epoch, batch, value)
                backward(loss)
                sgd_step(params, train.lr)
            losses.append(value)
            result.steps += 1
        mean_loss = float(np.mean(losses))
        result.loss_trace.append(mean_loss)
        _logger.info("Epoch %d/%d: mean loss %.5f", epoch + 1, train.epochs, mean_loss)
    return result


__all__ = [
    "LONG_REGIME_EPOCHS",
    "EpochRegime",
    "TrainConfig",
    "TrainResult",
    "train_model",
]
