"""Step and epoch timing for training runs."""

from __future__ import annotations

import logging
import statistics
import threading
import time
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from types import TracebackType
from typing import Any

from cellattn.utils import PathLikeStr, write_json


_logger = logging.getLogger("cellattn.diagnostics")


@dataclass
class StepMetrics:
    """One optimisation step."""

    epoch: int
    batch: int
    loss: float
    seconds: float
    batch_size: int = 0


@dataclass
class EpochMetrics:
    """Aggregated steps of one epoch."""

    epoch: int
    steps: int = 0
    images: int = 0
    total_seconds: float = 0.0
    mean_loss: float = 0.0
    min_loss: float = float("inf")
    max_loss: float = float("-inf")
    _loss_sum: float = field(default=0.0, repr=False)

    def update(self, step: StepMetrics) -> None:
        self.steps += 1
        self.images += step.batch_size
        self.total_seconds += step.seconds
        self._loss_sum += step.loss
        self.mean_loss = self._loss_sum / self.steps
        self.min_loss = min(self.min_loss, step.loss)
        self.max_loss = max(self.max_loss, step.loss)

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data.pop("_loss_sum")
        return data


class TrainingProfiler:
    """Records per-step losses and timings while active.

    Example:
        ```python
        with TrainingProfiler() as profiler:
            train_model(config, train_cfg, dataset, profiler=profiler)

        print(profiler.report())
        ```
    """

    def __init__(self) -> None:
        self._steps: list[StepMetrics] = []
        self._epochs: dict[int, EpochMetrics] = {}
        self._is_active = False
        self._lock = threading.RLock()

    def __enter__(self) -> TrainingProfiler:
        self.start()
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc_val: BaseException | None,
        exc_tb: TracebackType | None,
    ) -> None:
        self.stop()

    def start(self) -> None:
        with self._lock:
            self._is_active = True
            self._steps.clear()
            self._epochs.clear()
            _logger.debug("TrainingProfiler started")

    def stop(self) -> None:
        with self._lock:
            self._is_active = False
            _logger.debug("TrainingProfiler stopped")

    def is_active(self) -> bool:
        return self._is_active

    def record_step(
        self,
        epoch: int,
        batch: int,
        loss: float,
        seconds: float,
        batch_size: int = 0,
    ) -> None:
        """Record one step; ignored while the profiler is inactive."""
        if not self._is_active:
            return
        step = StepMetrics(epoch, batch, float(loss), float(seconds), batch_size)
        with self._lock:
            self._steps.append(step)
            self._epochs.setdefault(epoch, EpochMetrics(epoch)).update(step)

    @contextmanager
    def time_step(
        self, epoch: int, batch: int, batch_size: int = 0
    ) -> Iterator[dict[str, float]]:
        """Time a block; the caller stores the loss in the yielded dict."""
        slot: dict[str, float] = {"loss": float("nan")}
        start = time.perf_counter()
        try:
            yield slot
        finally:
            self.record_step(
                epoch, batch, slot["loss"], time.perf_counter() - start, batch_size
            )

    def get_steps(self) -> list[StepMetrics]:
        with self._lock:
            return list(self._steps)

    def get_epochs(self) -> list[EpochMetrics]:
        with self._lock:
            return [self._epochs[e] for e in sorted(self._epochs)]

    def get_timing_statistics(self) -> dict[str, float]:
        with self._lock:
            if not self._steps:
                return {}
            times = [s.seconds for s in self._steps]
            return {
                "total_time": sum(times),
                "average_time": statistics.mean(times),
                "median_time": statistics.median(times),
                "min_time": min(times),
                "max_time": max(times),
                "std_dev": statistics.stdev(times) if len(times) > 1 else 0.0,
            }

    def reset(self) -> None:
        with self._lock:
            self._steps.clear()
            self._epochs.clear()

    def report(self) -> str:
        """Human-readable summary of the recorded run."""
        with self._lock:
            if not self._steps:
                return "No profiling data available."
            timing = self.get_timing_statistics()
            lines = ["=== Training Profile ===", ""]
            lines.append(f"  Steps: {len(self._steps)}")
            lines.append(f"  Total time: {timing['total_time']:.4f}s")
            lines.append(f"  Average step: {timing['average_time']:.4f}s")
            lines.append("")
            lines.append("Epochs:")
            for em in self.get_epochs():
                lines.append(
                    f"  {em.epoch:>4}: loss {em.mean_loss:.5f} "
                    f"[{em.min_loss:.5f}, {em.max_loss:.5f}] "
                    f"{em.steps} steps, {em.total_seconds:.3f}s"
                )
            return "\n".join(lines)

    def as_dict(self) -> dict[str, Any]:
        return {
            "timing_statistics": self.get_timing_statistics(),
            "epochs": [em.as_dict() for em in self.get_epochs()],
        }

    def export_json(self, path: PathLikeStr) -> Path:
        return write_json(path, self.as_dict())


__all__ = [
    "EpochMetrics",
    "StepMetrics",
    "TrainingProfiler",
]
