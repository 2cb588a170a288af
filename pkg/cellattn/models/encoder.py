"""End-to-end multi-attention classifiers (RGB and MHL families)."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from cellattn.core import (
    ParameterSet,
    Tensor,
    dense,
    dropout,
    flatten,
    glorot_uniform,
    load_checkpoint,
    relu,
    reshape,
    save_checkpoint,
    softmax,
    zeros,
)
from cellattn.utils import ConfigurationError, DimensionError, PathLikeStr

from .attention import (
    CHANNELS,
    RGB_PAIRS,
    HeadWeights,
    InspectionHook,
    build_dhead_rgb,
    init_head_weights,
    isolate_channels,
    mal_mhl,
    mal_rgb,
)
from .backbones import Capture, backbone_forward, init_backbone
from .config import EncoderConfig, Family


_logger = logging.getLogger("cellattn.models")


def backbone_prefixes(config: EncoderConfig) -> list[str]:
    """Parameter prefixes of the backbone(s): one per channel for RGB."""
    if config.family is Family.RGB:
        return [f"backbone.{c}" for c in CHANNELS]
    return ["backbone"]


def attention_prefixes(config: EncoderConfig) -> list[str]:
    if config.family is Family.RGB:
        return [f"attention.dh_{CHANNELS[i]}{CHANNELS[j]}" for i, j in RGB_PAIRS]
    return ["attention.mhl"]


# ---------------------------------------------------------------------------
# MLP head
# ---------------------------------------------------------------------------


def init_mlp(
    params: ParameterSet,
    in_features: int,
    dims: Sequence[int],
    num_classes: int,
    rng: np.random.Generator,
    prefix: str = "mlp",
) -> None:
    width = in_features
    for i, d in enumerate(dims):
        params.bind(f"{prefix}.dense{i}.weight", glorot_uniform((width, d), rng))
        params.bind(f"{prefix}.dense{i}.bias", zeros((d,)))
        width = d
    params.bind(f"{prefix}.out.weight", glorot_uniform((width, num_classes), rng))
    params.bind(f"{prefix}.out.bias", zeros((num_classes,)))


def mlp_logits(
    features: Tensor,
    params: ParameterSet,
    training: bool = False,
    rng: np.random.Generator | None = None,
    dropout_rate: float = 0.3,
    prefix: str = "mlp",
) -> Tensor:
    """Dense -> ReLU -> dropout for each hidden layer, then the class layer."""
    if features.ndim != 2:
        raise DimensionError("mlp_head", features.shape, detail="needs (N, F) features")
    x = features
    i = 0
    while params.has(f"{prefix}.dense{i}.weight"):
        x = dense(
            x,
            params.get(f"{prefix}.dense{i}.weight"),
            params.get(f"{prefix}.dense{i}.bias"),
        )
        x = dropout(relu(x), dropout_rate, training, rng)
        i += 1
    weight = params.get(f"{prefix}.out.weight")
    return dense(x, weight, params.get(f"{prefix}.out.bias"))


def mlp_head(
    features: Tensor,
    params: ParameterSet,
    training: bool = False,
    rng: np.random.Generator | None = None,
    dropout_rate: float = 0.3,
) -> Tensor:
    """Class probabilities ``(N, 2)``; every row sums to 1."""
    return softmax(mlp_logits(features, params, training, rng, dropout_rate), axis=-1)


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------


def init_encoder(config: EncoderConfig, seed: int = 0) -> ParameterSet:
    """Fresh parameters for ``config``, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params = ParameterSet()
    for prefix in backbone_prefixes(config):
        init_backbone(params, config.backbone, rng, prefix)
    for prefix in attention_prefixes(config):
        init_head_weights(params, prefix, config, rng)
    init_mlp(params, config.feature_width, config.mlp_dims, config.num_classes, rng)
    _logger.info(
        "Initialised %s: %d tensors, %d parameters (seed=%d)",
        config.name,
        len(params),
        params.count(),
        seed,
    )
    return params


def attention_features(
    image: Tensor,
    config: EncoderConfig,
    params: ParameterSet,
    training: bool = False,
    capture: Capture | None = None,
    hook: InspectionHook | None = None,
) -> Tensor:
    """Isolator, backbone and attention levels.

    Returns the ``(N, L, width)`` block output.
    """
    if config.family is Family.RGB:
        signals = [
            backbone_forward(plane, config.backbone, params, prefix, training, capture)
            for plane, prefix in zip(
                isolate_channels(image), backbone_prefixes(config), strict=True
            )
        ]
        weights = [
            HeadWeights.from_params(params, prefix, config.heads)
            for prefix in attention_prefixes(config)
        ]
        dheads = build_dhead_rgb(*signals, weights, config.query_source, hook)
        return mal_rgb(dheads)
    signal = backbone_forward(
        image, config.backbone, params, "backbone", training, capture
    )
    weights = HeadWeights.from_params(params, "attention.mhl", config.heads)
    return mal_mhl(signal, weights, hook)


def _as_batch(image: Tensor, config: EncoderConfig) -> Tensor:
    x = reshape(image, (1, *image.shape)) if image.ndim == 3 else image
    if x.ndim != 4 or x.shape[1:] != config.image_shape:
        msg = (
            f"{config.name} expects images of shape {config.image_shape}, "
            f"got {image.shape}"
        )
        raise ConfigurationError(msg)
    return x


def forward_logits(
    image: Tensor,
    config: EncoderConfig,
    params: ParameterSet,
    training: bool = False,
    rng: np.random.Generator | None = None,
    capture: Capture | None = None,
    hook: InspectionHook | None = None,
) -> Tensor:
    """Pre-softmax class scores ``(N, 2)``.

    Accepts a ``(3, H, W)`` image or an ``(N, 3, H, W)`` batch.

    Args:
        image: Input image or batch.
        config: Model description.
        params: Parameters from :func:`init_encoder` or a checkpoint.
        training: Batch statistics and dropout when true.
        rng: Dropout generator, required in training mode.
        capture: Receives named intermediate activations.
        hook: Receives every attention weight matrix.

    Raises:
        ConfigurationError: The image does not match the configured size.
    """
    x = _as_batch(image, config)
    features = attention_features(x, config, params, training, capture, hook)
    if capture is not None:
        capture["attention.output"] = features
    return mlp_logits(flatten(features), params, training, rng, config.mlp_dropout)


def forward(
    image: Tensor,
    config: EncoderConfig,
    params: ParameterSet,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Class probabilities ``(N, 2)``; a single image gives ``(1, 2)``."""
    return softmax(forward_logits(image, config, params, training, rng), axis=-1)


def predict(
    images: np.ndarray,
    config: EncoderConfig,
    params: ParameterSet,
    batch_size: int = 8,
) -> tuple[np.ndarray, np.ndarray]:
    """Inference over an ``(N, 3, H, W)`` array; returns ``(probabilities, logits)``."""
    probs, logits = [], []
    for start in range(0, len(images), batch_size):
        out = forward_logits(Tensor(images[start : start + batch_size]), config, params)
        z = out.data.astype(np.float64)
        e = np.exp(z - z.max(axis=1, keepdims=True))
        probs.append(e / e.sum(axis=1, keepdims=True))
        logits.append(z)
    if not probs:
        return np.zeros((0, config.num_classes)), np.zeros((0, config.num_classes))
    return np.concatenate(probs), np.concatenate(logits)


@dataclass
class AttentionClassifier:
    """A config paired with its parameters."""

    config: EncoderConfig
    params: ParameterSet

    @classmethod
    def create(cls, config: EncoderConfig, seed: int = 0) -> AttentionClassifier:
        return cls(config, init_encoder(config, seed))

    def logits(self, image: Tensor, capture: Capture | None = None) -> Tensor:
        return forward_logits(image, self.config, self.params, capture=capture)

    def predict(
        self, images: np.ndarray, batch_size: int = 8
    ) -> tuple[np.ndarray, np.ndarray]:
        return predict(images, self.config, self.params, batch_size)

    def save(self, path: PathLikeStr, **metadata: Any) -> Path:
        return save_checkpoint(
            self.params, path, {"config": self.config.to_dict(), **metadata}
        )

    @classmethod
    def load(cls, path: PathLikeStr) -> AttentionClassifier:
        """Restore a classifier from a checkpoint written by :meth:`save`."""
        params, metadata = load_checkpoint(path)
        if "config" not in metadata:
            msg = f"Checkpoint {path} carries no model config"
            raise ConfigurationError(msg)
        return cls(EncoderConfig.from_dict(metadata["config"]), params)


__all__ = [
    "AttentionClassifier",
    "attention_features",
    "attention_prefixes",
    "backbone_prefixes",
    "forward",
    "forward_logits",
    "init_encoder",
    "init_mlp",
    "mlp_head",
    "mlp_logits",
    "predict",
]
