"""Backbones, attention blocks and the end-to-end classifiers."""

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
    multi_head_attention,
    scaled_dot_attention,
)
from .backbones import (
    BACKBONES,
    BackboneBuilder,
    backbone_forward,
    dense_block,
    init_backbone,
    init_dense_block,
    init_residual_block,
    residual_block,
    residual_transform,
)
from .config import BackboneConfig, BackboneKind, EncoderConfig, Family, QuerySource
from .encoder import (
    AttentionClassifier,
    attention_features,
    attention_prefixes,
    backbone_prefixes,
    forward,
    forward_logits,
    init_encoder,
    mlp_head,
    mlp_logits,
    predict,
)


__all__ = [
    "BACKBONES",
    "CHANNELS",
    "RGB_PAIRS",
    "AttentionClassifier",
    "BackboneBuilder",
    "BackboneConfig",
    "BackboneKind",
    "EncoderConfig",
    "Family",
    "HeadWeights",
    "InspectionHook",
    "QuerySource",
    "attention_features",
    "attention_prefixes",
    "backbone_forward",
    "backbone_prefixes",
    "build_dhead_rgb",
    "dense_block",
    "forward",
    "forward_logits",
    "init_backbone",
    "init_dense_block",
    "init_encoder",
    "init_head_weights",
    "init_residual_block",
    "isolate_channels",
    "mal_mhl",
    "mal_rgb",
    "mlp_head",
    "mlp_logits",
    "multi_head_attention",
    "predict",
    "residual_block",
    "residual_transform",
    "scaled_dot_attention",
]
