"""Welch t-tests, Bonferroni gating and correlation helpers."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
from scipy import special
from scipy import stats as sps

from cellattn.utils import (
    DataIOError,
    InputError,
    ParameterError,
    PathLikeStr,
    ensure_dir,
)


_logger = logging.getLogger("cellattn.evaluation")

DEFAULT_ALPHA = 0.05

ArrayLike = Sequence[float] | np.ndarray

_P_FLOOR = float(np.finfo(np.float64).tiny)


@dataclass(frozen=True)
class TTestResult:
    """Welch statistic, Welch-Satterthwaite degrees of freedom, two-sided p."""

    t: float
    df: float
    p: float


def _sample(values: ArrayLike, name: str, minimum: int = 2) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size < minimum:
        msg = f"{name} needs at least {minimum} values, got {arr.size}"
        raise InputError(msg)
    if not np.all(np.isfinite(arr)):
        msg = f"{name} contains NaN or Inf"
        raise InputError(msg)
    return arr


def welch_ttest(
    a: ArrayLike, b: ArrayLike
) -> TTestResult:
    """Two-sample t-test assuming unequal variances.

    The two-sided p-value is the regularized incomplete beta
    ``I_{df/(df+t^2)}(df/2, 1/2)``. Two constant samples with the same mean
    give ``t = 0, p = 1``.

    Raises:
        InputError: A sample has fewer than two values, or both samples are
            constant with different means.
    """
    xa, xb = _sample(a, "a"), _sample(b, "b")
    na, nb = xa.size, xb.size
    va, vb = xa.var(ddof=1) / na, xb.var(ddof=1) / nb
    diff = float(xa.mean() - xb.mean())
    if va == 0.0 and vb == 0.0:
        if diff == 0.0:
            return TTestResult(0.0, float(na + nb - 2), 1.0)
        msg = "both samples have zero variance and different means"
        raise InputError(msg)
    se2 = va + vb
    t = diff / math.sqrt(se2)
    df = se2**2 / (va**2 / (na - 1) + vb**2 / (nb - 1))
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(float(t), float(df), min(1.0, max(p, _P_FLOOR)))


def bonferroni_gate(
    p_values: Sequence[float],
    alpha: float = DEFAULT_ALPHA,
    m: int | None = None,
) -> list[bool]:
    """Flag ``p < alpha / m``; ``m`` defaults to the number of p-values.

    Raises:
        ParameterError: ``alpha`` outside ``(0, 1)`` or ``m < 1``.
    """
    if not 0.0 < alpha < 1.0:
        msg = f"alpha must be in (0, 1), got {alpha}"
        raise ParameterError(msg)
    tests = len(p_values) if m is None else m
    if tests < 1:
        msg = f"Bonferroni needs m >= 1, got {tests}"
        raise ParameterError(msg)
    threshold = alpha / tests
    return [float(p) < threshold for p in p_values]


def standardize(values: ArrayLike) -> np.ndarray:
    """Subtract the mean and divide by the (population) standard deviation."""
    arr = _sample(values, "values")
    if np.ptp(arr) == 0.0:
        msg = "cannot standardize a constant variable"
        raise InputError(msg)
    return np.asarray(sps.zscore(arr, ddof=0), dtype=np.float64)


def _pair(
    a: ArrayLike, b: ArrayLike, method: str
) -> tuple[np.ndarray, np.ndarray]:
    xa, xb = _sample(a, "a"), _sample(b, "b")
    if xa.size != xb.size:
        msg = f"{method} needs paired samples, got {xa.size} and {xb.size} values"
        raise InputError(msg)
    if np.ptp(xa) == 0.0 or np.ptp(xb) == 0.0:
        msg = f"{method} correlation is undefined for a constant variable"
        raise InputError(msg)
    return xa, xb


def pearson(a: ArrayLike, b: ArrayLike) -> float:
    xa, xb = _pair(a, b, "pearson")
    return float(sps.pearsonr(xa, xb).statistic)


def spearman(a: ArrayLike, b: ArrayLike) -> float:
    """Pearson correlation of fractional ranks (ties share their mean rank)."""
    xa, xb = _pair(a, b, "spearman")
    return float(sps.spearmanr(xa, xb).statistic)


def is_normal(values: ArrayLike, alpha: float = DEFAULT_ALPHA) -> bool:
    """Shapiro-Wilk normality check; at least three values are required."""
    arr = _sample(values, "values", minimum=3)
    if np.ptp(arr) == 0.0:
        return False
    return bool(sps.shapiro(arr).pvalue > alpha)


@dataclass(frozen=True)
class Correlation:
    method: str
    coefficient: float


def correlate(
    a: ArrayLike,
    b: ArrayLike,
    alpha: float = DEFAULT_ALPHA,
) -> Correlation:
    """Pearson when both variables look normal, Spearman otherwise."""
    if is_normal(a, alpha) and is_normal(b, alpha):
        return Correlation("pearson", pearson(a, b))
    return Correlation("spearman", spearman(a, b))


@dataclass(frozen=True)
class Summary:
    """Centre and spread: mean/std for normal data, median/IQR otherwise."""

    kind: str
    center: float
    spread: float

    def __str__(self) -> str:
        sep = "±" if self.kind == "mean_std" else "IQR"
        return f"{self.center:.4f} {sep} {self.spread:.4f}"


def describe(values: ArrayLike, alpha: float = DEFAULT_ALPHA) -> Summary:
    arr = _sample(values, "values", minimum=1)
    if arr.size < 3 or is_normal(arr, alpha):
        spread = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return Summary("mean_std", float(arr.mean()), spread)
    q1, median, q3 = np.percentile(arr, [25, 50, 75])
    return Summary("median_iqr", float(median), float(q3 - q1))


@dataclass(frozen=True)
class TTestRow:
    """One pairwise comparison of a metric between two models."""

    metric: str
    a: str
    b: str
    t: float
    df: float
    p: float
    significant: bool

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


MetricSamples = Mapping[str, Sequence[float | None]]


def ttest_matrix(
    samples: Mapping[str, MetricSamples],
    metrics: Sequence[str] | None = None,
    alpha: float = DEFAULT_ALPHA,
) -> list[TTestRow]:
    """Welch tests over every unordered pair of models, for every metric.

    ``samples`` maps a model name to ``{metric: per-fold values}``. The
    Bonferroni ``m`` is the number of pairs tested per metric. Undefined
    (``None``) fold values are dropped; a metric with fewer than two defined
    values on either side is skipped for that pair.

    Raises:
        InputError: Fewer than two models.
    """
    names = list(samples)
    if len(names) < 2:
        msg = f"t-test matrix needs at least two models, got {len(names)}"
        raise InputError(msg)
    chosen = list(metrics) if metrics is not None else list(samples[names[0]])
    pairs = list(itertools.combinations(names, 2))
    rows: list[TTestRow] = []
    for metric in chosen:
        results: list[tuple[str, str, TTestResult]] = []
        for a, b in pairs:
            va = [v for v in samples[a].get(metric, ()) if v is not None]
            vb = [v for v in samples[b].get(metric, ()) if v is not None]
            if len(va) < 2 or len(vb) < 2:
                _logger.warning(
                    "Skipping %s: %s vs %s lacks defined values", metric, a, b
                )
                continue
            results.append((a, b, welch_ttest(va, vb)))
        flags = bonferroni_gate([r.p for _, _, r in results], alpha, m=len(pairs))
        rows.extend(
            TTestRow(metric, a, b, r.t, r.df, r.p, flag)
            for (a, b, r), flag in zip(results, flags, strict=True)
        )
    return rows


def p_value_matrix(
    rows: Sequence[TTestRow], metric: str, names: Sequence[str]
) -> np.ndarray:
    """Symmetric ``(k, k)`` matrix of p-values for one metric; diagonal is 1."""
    index = {n: i for i, n in enumerate(names)}
    out = np.full((len(names), len(names)), np.nan)
    np.fill_diagonal(out, 1.0)
    for row in rows:
        if row.metric == metric:
            i, j = index[row.a], index[row.b]
            out[i, j] = out[j, i] = row.p
    return out


def _write_rows(path: PathLikeStr, lines: Sequence[Sequence[Any]]) -> Path:
    target = Path(path)
    ensure_dir(target.parent)
    try:
        with target.open("w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(lines)
    except OSError as e:
        msg = f"Cannot write t-test table to {target}: {e}"
        raise DataIOError(msg) from e
    return target


def _cell(p: float, significant: bool) -> str:
    if math.isnan(p):
        return "n/a"
    return f"{p:.6g}{'*' if significant else ''}"


def write_ttest_csv(
    rows: Sequence[TTestRow],
    path: PathLikeStr,
    names: Sequence[str],
    metrics: Sequence[str] | None = None,
) -> Path:
    """Write one upper-triangular p-value grid per metric.

    Each block starts with ``metric, name_1, ..., name_k``; row ``i`` holds
    the p-values against models ``j > i``, suffixed ``*`` when they pass the
    Bonferroni gate. The diagonal and the lower triangle are empty, ``n/a``
    marks a pair that could not be tested, and a blank line ends each block.
    """
    if metrics is None:
        metrics = list(dict.fromkeys(row.metric for row in rows))
    lines: list[list[str]] = []
    for metric in metrics:
        matrix = p_value_matrix(rows, metric, names)
        flagged = {
            frozenset((r.a, r.b)) for r in rows if r.metric == metric and r.significant
        }
        lines.append([metric, *names])
        for i, a in enumerate(names):
            cells = [
                _cell(matrix[i, j], frozenset((a, b)) in flagged) if j > i else ""
                for j, b in enumerate(names)
            ]
            lines.append([a, *cells])
        lines.append([])
    return _write_rows(path, lines)


def write_ttest_long_csv(rows: Sequence[TTestRow], path: PathLikeStr) -> Path:
    """Write one line per metric and unordered model pair."""
    fields = ["metric", "a", "b", "t", "df", "p", "significant"]
    records = [[getattr(row, f) for f in fields] for row in rows]
    return _write_rows(path, [fields, *records])


__all__ = [
    "DEFAULT_ALPHA",
    "Correlation",
    "MetricSamples",
    "Summary",
    "TTestResult",
    "TTestRow",
    "bonferroni_gate",
    "correlate",
    "describe",
    "is_normal",
    "p_value_matrix",
    "pearson",
    "spearman",
    "standardize",
    "ttest_matrix",
    "welch_ttest",
    "write_ttest_csv",
    "write_ttest_long_csv",
]
