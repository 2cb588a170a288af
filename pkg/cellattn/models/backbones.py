"""Miniature convolutional backbones.

Three kinds are registered in :data:`BACKBONES`:

``plain_cnn``
    Exactly three 3x3 convolutions; the first two downsample by stride 2.
``residual``
    Stride-2 stem, then residual blocks ``x + H(x)`` where ``H`` is
    conv -> BN -> ReLU -> conv. A learned 1x1 convolution projects the skip
    path when the block changes the channel count.
``dense_concat``
    Stride-2 stem, then dense blocks whose layer ``i`` sees the channel-wise
    concatenation of every earlier feature map, composite BN -> ReLU -> 3x3
    conv. Transitions between blocks are BN -> ReLU -> 1x1 conv -> average pool.

Every backbone ends in a convolution with ``num_classes`` output channels whose
spatial positions flatten into an ``(L, num_classes)`` signal.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, MutableMapping
from dataclasses import dataclass

import numpy as np

from cellattn.core import (
    ParameterSet,
    Registry,
    RunningStats,
    Tensor,
    add,
    avg_pool2d,
    batchnorm,
    concat,
    conv2d,
    glorot_uniform,
    ones,
    relu,
    reshape,
    transpose,
    zeros,
)
from cellattn.utils import ConfigurationError, InputError

from .config import BackboneConfig, BackboneKind


_logger = logging.getLogger("cellattn.models")

Capture = MutableMapping[str, Tensor]


# ---------------------------------------------------------------------------
# Parameter helpers
# ---------------------------------------------------------------------------


def init_conv(
    params: ParameterSet,
    name: str,
    in_ch: int,
    out_ch: int,
    size: int,
    rng: np.random.Generator,
    zero: bool = False,
) -> None:
    shape = (out_ch, in_ch, size, size)
    kernel = zeros(shape) if zero else glorot_uniform(shape, rng)
    params.bind(f"{name}.kernel", kernel)
    params.bind(f"{name}.bias", zeros((out_ch,)))


def init_bn(params: ParameterSet, name: str, channels: int) -> None:
    params.bind(f"{name}.gamma", ones((channels,)))
    params.bind(f"{name}.beta", zeros((channels,)))
    params.bind_buffer(name, RunningStats.zeros(channels))


def apply_conv(
    x: Tensor, params: ParameterSet, name: str, stride: int = 1
) -> Tensor:
    kernel = params.get(f"{name}.kernel")
    return conv2d(
        x,
        kernel,
        params.get(f"{name}.bias"),
        stride=stride,
        padding=kernel.shape[2] // 2,
    )


def apply_bn(x: Tensor, params: ParameterSet, name: str, training: bool) -> Tensor:
    return batchnorm(
        x,
        params.get(f"{name}.gamma"),
        params.get(f"{name}.beta"),
        running=params.get_buffer(name),
        training=training,
    )


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------


def init_residual_block(
    params: ParameterSet,
    prefix: str,
    in_ch: int,
    out_ch: int,
    rng: np.random.Generator,
    zero_last: bool = False,
) -> None:
    """Register a residual block; ``zero_last`` makes ``H`` identically zero."""
    init_conv(params, f"{prefix}.conv1", in_ch, out_ch, 3, rng)
    init_bn(params, f"{prefix}.bn1", out_ch)
    init_conv(params, f"{prefix}.conv2", out_ch, out_ch, 3, rng, zero=zero_last)
    if in_ch != out_ch:
        init_conv(params, f"{prefix}.proj", in_ch, out_ch, 1, rng)


def residual_transform(
    x: Tensor, params: ParameterSet, prefix: str, training: bool = False
) -> Tensor:
    """The block's ``H(x)``."""
    h = apply_conv(x, params, f"{prefix}.conv1")
    h = relu(apply_bn(h, params, f"{prefix}.bn1", training))
    return apply_conv(h, params, f"{prefix}.conv2")


def residual_block(
    x: Tensor, params: ParameterSet, prefix: str, training: bool = False
) -> Tensor:
    """``H(x) + x`` with a 1x1 projected skip when channel counts differ."""
    h = residual_transform(x, params, prefix, training)
    skip = x
    if params.has(f"{prefix}.proj.kernel"):
        skip = apply_conv(x, params, f"{prefix}.proj")
    if h.shape != skip.shape:
        msg = (
            f"residual block {prefix}: transform output {h.shape} cannot be "
            f"added to skip path {skip.shape}"
        )
        raise ConfigurationError(msg)
    return add(h, skip)


def init_dense_block(
    params: ParameterSet,
    prefix: str,
    in_ch: int,
    growth: int,
    layers: int,
    rng: np.random.Generator,
) -> int:
    """Register a dense block and return its output channel count."""
    channels = in_ch
    for i in range(layers):
        init_bn(params, f"{prefix}.layer{i}.bn", channels)
        init_conv(params, f"{prefix}.layer{i}.conv", channels, growth, 3, rng)
        channels += growth
    return channels


def dense_block(
    x0: Tensor,
    params: ParameterSet,
    prefix: str,
    layers: int,
    training: bool = False,
    capture: Capture | None = None,
) -> Tensor:
    """Dense connectivity: layer ``i`` receives ``concat(x0, ..., x_{i-1})``.

    Layer inputs are recorded in ``capture`` as ``{prefix}.layer{i}.input``.
    """
    features = [x0]
    for i in range(layers):
        inp = features[0] if len(features) == 1 else concat(features, axis=1)
        if capture is not None:
            capture[f"{prefix}.layer{i}.input"] = inp
        y = relu(apply_bn(inp, params, f"{prefix}.layer{i}.bn", training))
        y = apply_conv(y, params, f"{prefix}.layer{i}.conv")
        if y.shape[2:] != x0.shape[2:]:
            msg = f"dense block {prefix}: layer {i} changed spatial dims {y.shape}"
            raise ConfigurationError(msg)
        features.append(y)
    return concat(features, axis=1)


# ---------------------------------------------------------------------------
# Backbone kinds
# ---------------------------------------------------------------------------

InitFn = Callable[[ParameterSet, str, BackboneConfig, np.random.Generator], None]
ForwardFn = Callable[
    [Tensor, ParameterSet, str, BackboneConfig, bool, "Capture | None"], Tensor
]


@dataclass(frozen=True)
class BackboneBuilder:
    """Parameter initialiser and forward function of one backbone kind.

    ``forward`` returns the final ``(N, num_classes, h, w)`` map and records
    the head's input as ``{prefix}.features`` and its output as
    ``{prefix}.head`` in ``capture``.
    """

    init: InitFn
    forward: ForwardFn


BACKBONES: Registry[BackboneBuilder] = Registry("backbone kind")


def _record(capture: Capture | None, name: str, value: Tensor) -> Tensor:
    if capture is not None:
        capture[name] = value
    return value


def _init_plain(
    params: ParameterSet, prefix: str, cfg: BackboneConfig, rng: np.random.Generator
) -> None:
    f = cfg.base_filters
    init_conv(params, f"{prefix}.conv1", cfg.input_channels, f, 3, rng)
    init_conv(params, f"{prefix}.conv2", f, f, 3, rng)
    init_conv(params, f"{prefix}.head", f, cfg.num_classes, 3, rng)


def _forward_plain(
    x: Tensor,
    params: ParameterSet,
    prefix: str,
    cfg: BackboneConfig,
    training: bool,  # noqa: ARG001
    capture: Capture | None,
) -> Tensor:
    x = relu(apply_conv(x, params, f"{prefix}.conv1", stride=2))
    stride = 2 if cfg.downsample_stages >= 2 else 1
    x = relu(apply_conv(x, params, f"{prefix}.conv2", stride=stride))
    _record(capture, f"{prefix}.features", x)
    return _record(capture, f"{prefix}.head", apply_conv(x, params, f"{prefix}.head"))


def _init_residual(
    params: ParameterSet, prefix: str, cfg: BackboneConfig, rng: np.random.Generator
) -> None:
    f = cfg.base_filters
    init_conv(params, f"{prefix}.stem", cfg.input_channels, f, 3, rng)
    init_bn(params, f"{prefix}.stem_bn", f)
    channels = f
    for b in range(cfg.blocks):
        if 1 <= b < cfg.downsample_stages:
            init_conv(params, f"{prefix}.down{b}", channels, channels, 3, rng)
            init_bn(params, f"{prefix}.down{b}_bn", channels)
        init_residual_block(params, f"{prefix}.block{b}", channels, 2 * f, rng)
        channels = 2 * f
    init_conv(params, f"{prefix}.head", channels, cfg.num_classes, 1, rng)


def _forward_residual(
    x: Tensor,
    params: ParameterSet,
    prefix: str,
    cfg: BackboneConfig,
    training: bool,
    capture: Capture | None,
) -> Tensor:
    x = apply_conv(x, params, f"{prefix}.stem", stride=2)
    x = relu(apply_bn(x, params, f"{prefix}.stem_bn", training))
    for b in range(cfg.blocks):
        if 1 <= b < cfg.downsample_stages:
            x = apply_conv(x, params, f"{prefix}.down{b}", stride=2)
            x = relu(apply_bn(x, params, f"{prefix}.down{b}_bn", training))
        x = residual_block(x, params, f"{prefix}.block{b}", training)
    _record(capture, f"{prefix}.features", x)
    return _record(capture, f"{prefix}.head", apply_conv(x, params, f"{prefix}.head"))


def _init_dense(
    params: ParameterSet, prefix: str, cfg: BackboneConfig, rng: np.random.Generator
) -> None:
    f = cfg.base_filters
    init_conv(params, f"{prefix}.stem", cfg.input_channels, f, 3, rng)
    channels = f
    for b in range(cfg.blocks):
        if 1 <= b < cfg.downsample_stages:
            init_bn(params, f"{prefix}.trans{b}.bn", channels)
            init_conv(params, f"{prefix}.trans{b}.conv", channels, f, 1, rng)
            channels = f
        channels = init_dense_block(
            params,
            f"{prefix}.block{b}",
            channels,
            cfg.growth,
            cfg.layers_per_block,
            rng,
        )
    init_bn(params, f"{prefix}.final_bn", channels)
    init_conv(params, f"{prefix}.head", channels, cfg.num_classes, 1, rng)


def _forward_dense(
    x: Tensor,
    params: ParameterSet,
    prefix: str,
    cfg: BackboneConfig,
    training: bool,
    capture: Capture | None,
) -> Tensor:
    x = apply_conv(x, params, f"{prefix}.stem", stride=2)
    for b in range(cfg.blocks):
        if 1 <= b < cfg.downsample_stages:
            x = relu(apply_bn(x, params, f"{prefix}.trans{b}.bn", training))
            x = avg_pool2d(apply_conv(x, params, f"{prefix}.trans{b}.conv"), 2)
        x = dense_block(
            x, params, f"{prefix}.block{b}", cfg.layers_per_block, training, capture
        )
    x = relu(apply_bn(x, params, f"{prefix}.final_bn", training))
    _record(capture, f"{prefix}.features", x)
    return _record(capture, f"{prefix}.head", apply_conv(x, params, f"{prefix}.head"))


BACKBONES.bind(
    BackboneKind.PLAIN_CNN.value,
    BackboneBuilder(_init_plain, _forward_plain),
    "three-layer CNN",
)
BACKBONES.bind(
    BackboneKind.RESIDUAL.value,
    BackboneBuilder(_init_residual, _forward_residual),
    "residual identity blocks",
)
BACKBONES.bind(
    BackboneKind.DENSE_CONCAT.value,
    BackboneBuilder(_init_dense, _forward_dense),
    "dense concatenation blocks",
)


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def init_backbone(
    params: ParameterSet,
    config: BackboneConfig,
    rng: np.random.Generator,
    prefix: str = "backbone",
) -> None:
    """Register the parameters of one backbone under ``prefix``."""
    before = params.count()
    BACKBONES.get(config.kind.value).init(params, prefix, config, rng)
    _logger.debug(
        "Initialised %s backbone %r with %d parameters",
        config.kind.value,
        prefix,
        params.count() - before,
    )


def backbone_forward(
    image: Tensor,
    config: BackboneConfig,
    params: ParameterSet,
    prefix: str = "backbone",
    training: bool = False,
    capture: Capture | None = None,
) -> Tensor:
    """Run a backbone and flatten its class map into an ``(N, L, 2)`` signal.

    An unbatched ``(C, H, W)`` image yields an ``(L, 2)`` signal.

    Raises:
        InputError: The image channel count does not match the config.
    """
    unbatched = image.ndim == 3
    x = reshape(image, (1, *image.shape)) if unbatched else image
    if x.ndim != 4 or x.shape[1] != config.input_channels:
        msg = (
            f"backbone {prefix!r} expects {config.input_channels} input channel(s), "
            f"got image of shape {image.shape}"
        )
        raise InputError(msg)
    out = BACKBONES.get(config.kind.value).forward(
        x, params, prefix, config, training, capture
    )
    n, classes, h, w = out.shape
    if h * w != config.signal_len:
        msg = (
            f"backbone {prefix!r} produced {h}x{w} positions, expected "
            f"L={config.signal_len} for image side {config.image_side}"
        )
        raise ConfigurationError(msg)
    signal = transpose(reshape(out, (n, classes, h * w)))
    return reshape(signal, signal.shape[1:]) if unbatched else signal


__all__ = [
    "BACKBONES",
    "BackboneBuilder",
    "apply_bn",
    "apply_conv",
    "backbone_forward",
    "dense_block",
    "init_backbone",
    "init_bn",
    "init_conv",
    "init_dense_block",
    "init_residual_block",
    "residual_block",
    "residual_transform",
]
