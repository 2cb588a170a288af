"""Synthetic cohort generation, augmentation and cross-validation folds."""

from .io import load_image, save_image, save_rgb, to_uint8
from .manifest import (
    DEFAULT_FOLDS,
    GENERATOR_VERSION,
    DatasetManifest,
    ImageSource,
    ManifestEntry,
    TrainingSet,
    audit_training_set,
    build_training_set,
    stratified_kfold,
)
from .synthetic import (
    SyntheticConfig,
    generate_synthetic_dataset,
    image_ids,
    red_radial_spread,
    render_cell,
    render_dataset,
)
from .transforms import (
    DEFAULT_AUGMENTS,
    AugmentKind,
    ZcaWhitener,
    add_noise,
    augment,
    max_shift,
    parse_augment_kind,
    resample_image,
    rescale_unit,
    resize_plane,
    rotate,
    shift,
)


__all__ = [
    "DEFAULT_AUGMENTS",
    "DEFAULT_FOLDS",
    "GENERATOR_VERSION",
    "AugmentKind",
    "DatasetManifest",
    "ImageSource",
    "ManifestEntry",
    "SyntheticConfig",
    "TrainingSet",
    "ZcaWhitener",
    "add_noise",
    "audit_training_set",
    "augment",
    "build_training_set",
    "generate_synthetic_dataset",
    "image_ids",
    "load_image",
    "max_shift",
    "parse_augment_kind",
    "red_radial_spread",
    "render_cell",
    "render_dataset",
    "resample_image",
    "rescale_unit",
    "resize_plane",
    "rotate",
    "save_image",
    "save_rgb",
    "shift",
    "stratified_kfold",
    "to_uint8",
]
