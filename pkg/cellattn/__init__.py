"""cellattn - multi-attention channel classifiers for fluorescence cell images.

Miniature convolutional backbones feed channel attention blocks (RGB and MHL
families); GradCam and geometric-mean aggregation explain the predictions,
and a stratified cross-validation harness with Welch t-tests compares models.
"""

__version__ = "0.1.0"

# Testing exports
from . import testing

# Core exports
from .core import (
    ParameterSet,
    Registry,
    Tensor,
    backward,
    grad,
    load_checkpoint,
    save_checkpoint,
)

# Data exports
from .data import (
    DatasetManifest,
    SyntheticConfig,
    build_training_set,
    generate_synthetic_dataset,
    stratified_kfold,
)

# Diagnostics exports
from .diagnostics import TrainingProfiler

# Evaluation exports
from .evaluation import (
    CrossValidationReport,
    MetricsReport,
    TrainConfig,
    bonferroni_gate,
    compute_metrics,
    cross_validate,
    evaluate_model,
    roc_curve,
    train_model,
    welch_ttest,
)

# Explainability exports
from .explain import (
    SaliencyMap,
    correlation_image,
    gmean,
    gradcam,
    ratio_scores,
)

# Model exports
from .models import (
    AttentionClassifier,
    BackboneConfig,
    BackboneKind,
    EncoderConfig,
    Family,
    forward,
    init_encoder,
)

# Utility exports
from .utils import (
    CellAttnError,
    ConfigurationError,
    DataIOError,
    DimensionError,
    InputError,
    LeakageError,
    NumericalError,
    ParameterError,
    UsageError,
)


__all__ = [
    "AttentionClassifier",
    "BackboneConfig",
    "BackboneKind",
    "CellAttnError",
    "ConfigurationError",
    "CrossValidationReport",
    "DataIOError",
    "DatasetManifest",
    "DimensionError",
    "EncoderConfig",
    "Family",
    "InputError",
    "LeakageError",
    "MetricsReport",
    "NumericalError",
    "ParameterError",
    "ParameterSet",
    "Registry",
    "SaliencyMap",
    "SyntheticConfig",
    "Tensor",
    "TrainConfig",
    "TrainingProfiler",
    "UsageError",
    "__version__",
    "backward",
    "bonferroni_gate",
    "build_training_set",
    "compute_metrics",
    "correlation_image",
    "cross_validate",
    "evaluate_model",
    "forward",
    "generate_synthetic_dataset",
    "gmean",
    "grad",
    "gradcam",
    "init_encoder",
    "load_checkpoint",
    "ratio_scores",
    "roc_curve",
    "save_checkpoint",
    "stratified_kfold",
    "testing",
    "train_model",
    "welch_ttest",
]
