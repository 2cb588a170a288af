"""Model evaluation and the stratified k-fold cross-validation driver."""

from __future__ import annotations

import csv
import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from cellattn.core import ParameterSet
from cellattn.data import (
    DatasetManifest,
    ImageSource,
    ManifestEntry,
    build_training_set,
    resample_image,
)
from cellattn.diagnostics import TrainingProfiler
from cellattn.models import EncoderConfig, init_encoder, predict
from cellattn.utils import (
    ConfigurationError,
    DataIOError,
    InputError,
    PathLikeStr,
    derive_seed,
    ensure_dir,
    read_json,
    to_json_text,
)

from .metrics import (
    METRIC_NAMES,
    TABLE_LABELS,
    MetricsReport,
    ROCCurve,
    compute_metrics,
    roc_curve,
)
from .training import TrainConfig, train_model


_logger = logging.getLogger("cellattn.evaluation")


class EvaluationResult(NamedTuple):
    probs: np.ndarray
    logits: np.ndarray
    metrics: MetricsReport


def evaluate_model(
    config: EncoderConfig,
    params: ParameterSet,
    images: np.ndarray,
    labels: np.ndarray,
    batch_size: int = 8,
) -> EvaluationResult:
    """Inference plus the full metric suite on one labelled image set."""
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or len(images) == 0:
        msg = f"evaluation needs a non-empty (N, 3, H, W) batch, got {images.shape}"
        raise InputError(msg)
    probs, logits = predict(images, config, params, batch_size)
    return EvaluationResult(probs, logits, compute_metrics(probs, labels))


def image_source(manifest: DatasetManifest, side: int) -> ImageSource:
    """Load manifest images, resampled when the model expects another size."""
    if manifest.image_side == side:
        return manifest.load

    def load(entry: ManifestEntry) -> np.ndarray:
        return resample_image(manifest.load(entry), side)

    return load


@dataclass
class FoldResult:
    """Outcome of training and testing on one held-out fold."""

    fold: int
    metrics: MetricsReport
    loss_trace: list[float] = field(default_factory=list)
    train_size: int = 0
    test_ids: list[str] = field(default_factory=list)
    probs: np.ndarray | None = field(default=None, repr=False)
    labels: np.ndarray | None = field(default=None, repr=False)
    params: ParameterSet | None = field(default=None, repr=False)

    def roc(self, cls: int = 1) -> ROCCurve:
        if self.probs is None or self.labels is None:
            msg = f"fold {self.fold} kept no predictions"
            raise InputError(msg)
        return roc_curve(self.probs, self.labels, cls)

    def to_dict(self) -> dict[str, Any]:
        return {
            "fold": self.fold,
            "metrics": self.metrics.to_dict(),
            "loss_trace": list(self.loss_trace),
            "train_size": self.train_size,
            "test_ids": list(self.test_ids),
        }


def _mean_std(values: Sequence[float | None]) -> tuple[float | None, float | None]:
    defined = np.array([v for v in values if v is not None], dtype=np.float64)
    if defined.size == 0:
        return None, None
    std = float(defined.std(ddof=1)) if defined.size > 1 else 0.0
    return float(defined.mean()), std


@dataclass
class CrossValidationReport:
    """Per-fold metrics of one model and their mean ± standard deviation."""

    model: str
    config: dict[str, Any]
    train: dict[str, Any]
    folds: list[FoldResult]

    @property
    def regime(self) -> str:
        return str(self.train.get("regime", ""))

    def values(self, metric: str) -> list[float | None]:
        return [f.metrics.get(metric) for f in self.folds]

    def mean(self, metric: str) -> float | None:
        return _mean_std(self.values(metric))[0]

    def std(self, metric: str) -> float | None:
        return _mean_std(self.values(metric))[1]

    def summary(self) -> dict[str, dict[str, Any]]:
        out: dict[str, dict[str, Any]] = {}
        for name in METRIC_NAMES:
            mean, std = _mean_std(self.values(name))
            out[name] = {"values": self.values(name), "mean": mean, "std": std}
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "regime": self.regime,
            "config": self.config,
            "train": self.train,
            "folds": [f.to_dict() for f in self.folds],
            "summary": self.summary(),
        }

    def to_json(self) -> str:
        return to_json_text(self.to_dict())

    def save_json(self, path: PathLikeStr) -> Path:
        target = Path(path)
        ensure_dir(target.parent)
        try:
            target.write_text(self.to_json(), encoding="utf-8")
        except OSError as e:
            msg = f"Cannot write metrics to {target}: {e}"
            raise DataIOError(msg) from e
        return target

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CrossValidationReport:
        try:
            folds = [
                FoldResult(
                    fold=int(f["fold"]),
                    metrics=MetricsReport.from_dict(f["metrics"]),
                    loss_trace=list(f.get("loss_trace", [])),
                    train_size=int(f.get("train_size", 0)),
                    test_ids=list(f.get("test_ids", [])),
                )
                for f in data["folds"]
            ]
            return cls(
                str(data["model"]), dict(data["config"]), dict(data["train"]), folds
            )
        except (KeyError, TypeError, ValueError) as e:
            msg = f"Malformed metrics report: {e}"
            raise InputError(msg) from e

    @classmethod
    def load_json(cls, path: PathLikeStr) -> CrossValidationReport:
        return cls.from_dict(read_json(path))

    def table_rows(self) -> list[list[str]]:
        """Rows ``label, fold_1..fold_k, mean, std`` in summary-table order."""

        def cell(v: float | None) -> str:
            return "" if v is None else f"{v:.6f}"

        rows = [
            ["metric", *(f"fold_{f.fold}" for f in self.folds), "mean", "std"],
        ]
        for name in METRIC_NAMES:
            mean, std = _mean_std(self.values(name))
            folds = map(cell, self.values(name))
            rows.append([TABLE_LABELS[name], *folds, cell(mean), cell(std)])
        return rows

    def save_csv(self, path: PathLikeStr) -> Path:
        target = Path(path)
        ensure_dir(target.parent)
        try:
            with target.open("w", newline="", encoding="utf-8") as fh:
                csv.writer(fh).writerows(self.table_rows())
        except OSError as e:
            msg = f"Cannot write metrics table to {target}: {e}"
            raise DataIOError(msg) from e
        return target

    def format_table(self) -> str:
        lines = [f"{self.model} ({self.regime}, {len(self.folds)} folds)"]
        for name in METRIC_NAMES:
            mean, std = _mean_std(self.values(name))
            text = "undefined" if mean is None else f"{mean:.4f} ± {std:.4f}"
            lines.append(f"  {TABLE_LABELS[name]:<16} {text}")
        return "\n".join(lines)


def run_fold(
    config: EncoderConfig,
    train_cfg: TrainConfig,
    manifest: DatasetManifest,
    fold: int,
    source: ImageSource | None = None,
    profiler: TrainingProfiler | None = None,
) -> FoldResult:
    """Augment the other folds, train from a fresh seeded init, test on ``fold``."""
    load = source or image_source(manifest, config.image_side)
    pool = build_training_set(
        manifest,
        fold,
        augment_factor=train_cfg.augment_factor,
        seed=train_cfg.seed,
        kinds=train_cfg.augment_kinds,
        source=load,
    )
    _logger.info(
        "Fold %d: %d training images (%d augmented)",
        fold,
        len(pool),
        pool.augmented_count,
    )
    params = init_encoder(config, derive_seed(train_cfg.seed, "init", fold))
    fold_train = replace(train_cfg, seed=derive_seed(train_cfg.seed, "train", fold))
    trained = train_model(
        config, fold_train, pool.images, pool.labels, params=params, profiler=profiler
    )
    test_entries = manifest.fold_entries(fold)
    test_images = np.stack([load(e) for e in test_entries])
    test_labels = manifest.labels(test_entries)
    probs, _, metrics = evaluate_model(
        config, trained.params, test_images, test_labels, train_cfg.batch_size
    )
    return FoldResult(
        fold=fold,
        metrics=metrics,
        loss_trace=trained.loss_trace,
        train_size=len(pool),
        test_ids=[e.image_id for e in test_entries],
        probs=probs,
        labels=test_labels,
        params=trained.params,
    )


def cross_validate(
    config: EncoderConfig,
    train_cfg: TrainConfig,
    manifest: DatasetManifest,
    jobs: int = 1,
    source: ImageSource | None = None,
    on_fold: Callable[[FoldResult], None] | None = None,
) -> CrossValidationReport:
    """Run every fold of ``manifest`` and aggregate the per-fold metrics.

    Folds are independent (own init and training seeds) and may run on
    ``jobs`` threads; results are always reported in fold order.

    Raises:
        ConfigurationError: The manifest has no fold assignment.
    """
    folds = manifest.folds
    if not folds:
        msg = "manifest has no fold assignment; run stratified_kfold first"
        raise ConfigurationError(msg)
    _logger.info("Cross-validating %s over %d folds", config.name, len(folds))

    def one(fold: int) -> FoldResult:
        result = run_fold(config, train_cfg, manifest, fold, source)
        if on_fold is not None:
            on_fold(result)
        return result

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, folds))
    else:
        results = [one(f) for f in folds]
    return CrossValidationReport(
        config.name, config.to_dict(), train_cfg.to_dict(), results
    )


__all__ = [
    "CrossValidationReport",
    "EvaluationResult",
    "FoldResult",
    "cross_validate",
    "evaluate_model",
    "image_source",
    "run_fold",
]
