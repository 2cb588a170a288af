"""Training, cross-validation, metrics and statistical comparison."""

from .crossval import (
    CrossValidationReport,
    EvaluationResult,
    FoldResult,
    cross_validate,
    evaluate_model,
    image_source,
    run_fold,
)
from .metrics import (
    METRIC_NAMES,
    ROW_SUM_TOLERANCE,
    TABLE_LABELS,
    MetricsReport,
    ROCCurve,
    compute_metrics,
    roc_curve,
)
from .stats import (
    DEFAULT_ALPHA,
    Correlation,
    MetricSamples,
    Summary,
    TTestResult,
    TTestRow,
    bonferroni_gate,
    correlate,
    describe,
    is_normal,
    p_value_matrix,
    pearson,
    spearman,
    standardize,
    ttest_matrix,
    welch_ttest,
    write_ttest_csv,
    write_ttest_long_csv,
)
from .training import (
    LONG_REGIME_EPOCHS,
    EpochRegime,
    TrainConfig,
    TrainResult,
    train_model,
)


__all__ = [
    "DEFAULT_ALPHA",
    "LONG_REGIME_EPOCHS",
    "METRIC_NAMES",
    "ROW_SUM_TOLERANCE",
    "TABLE_LABELS",
    "Correlation",
    "CrossValidationReport",
    "EpochRegime",
    "EvaluationResult",
    "FoldResult",
    "MetricSamples",
    "MetricsReport",
    "ROCCurve",
    "Summary",
    "TTestResult",
    "TTestRow",
    "TrainConfig",
    "TrainResult",
    "bonferroni_gate",
    "compute_metrics",
    "correlate",
    "cross_validate",
    "describe",
    "evaluate_model",
    "image_source",
    "is_normal",
    "p_value_matrix",
    "pearson",
    "roc_curve",
    "run_fold",
    "spearman",
    "standardize",
    "train_model",
    "ttest_matrix",
    "welch_ttest",
    "write_ttest_csv",
    "write_ttest_long_csv",
]
