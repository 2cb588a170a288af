"""Testing utilities for cellattn."""

from .utilities import (
    attention_oracle,
    check_gradients,
    multi_head_oracle,
    numerical_gradient,
    override_parameter,
    pairwise_auc,
    random_image,
    random_images,
    relative_error,
    tiny_encoder_config,
)


__all__ = [
    "attention_oracle",
    "check_gradients",
    "multi_head_oracle",
    "numerical_gradient",
    "override_parameter",
    "pairwise_auc",
    "random_image",
    "random_images",
    "relative_error",
    "tiny_encoder_config",
]
