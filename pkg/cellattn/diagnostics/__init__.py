"""Diagnostics for training runs."""

from .profiling import EpochMetrics, StepMetrics, TrainingProfiler


__all__ = [
    "EpochMetrics",
    "StepMetrics",
    "TrainingProfiler",
]
