"""Global explanations: geometric-mean maps, patch correlation and ratio scores."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from cellattn.utils import InputError, ParameterError

from .gradcam import SaliencyMap


_logger = logging.getLogger("cellattn.explain")

GMEAN_EPSILON = 1e-6
DEFAULT_HALFWIDTH = 2
DEFAULT_THRESHOLD = 0.5
# Relative spread below which a window counts as constant.
_DEGENERATE_RTOL = 1e-9


def _as_map(value: SaliencyMap | np.ndarray) -> np.ndarray:
    if isinstance(value, SaliencyMap):
        return value.values
    return np.asarray(value, np.float64)


def shape_map(image: np.ndarray) -> np.ndarray:
    """Per-pixel luminance (channel mean) of a ``(3, H, W)`` image."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3:
        msg = f"shape_map expects a (C, H, W) image, got shape {arr.shape}"
        raise InputError(msg)
    return arr.mean(axis=0)


def gmean(
    maps: Sequence[SaliencyMap | np.ndarray],
    weights: Sequence[float] | None = None,
    eps: float = GMEAN_EPSILON,
) -> np.ndarray:
    """Weighted geometric mean per pixel: ``exp(sum w_i ln x_i / sum w_i)``.

    Pixel values are floored at ``eps`` before the logarithm; the result is
    clipped to the elementwise range of the inputs, so all-zero pixels stay 0.

    Raises:
        InputError: Empty list or maps of different shapes.
        ParameterError: A weight is not positive or the count differs.
    """
    if not maps:
        msg = "gmean needs at least one map"
        raise InputError(msg)
    arrays = [_as_map(m) for m in maps]
    ref = arrays[0].shape
    for arr in arrays[1:]:
        if arr.shape != ref:
            msg = f"gmean maps differ in shape: {ref} vs {arr.shape}"
            raise InputError(msg)
    w = np.ones(len(arrays)) if weights is None else np.asarray(weights, np.float64)
    if w.shape != (len(arrays),) or np.any(w <= 0):
        msg = f"gmean needs one positive weight per map, got {list(w)}"
        raise ParameterError(msg)
    stack = np.stack(arrays)
    w = w.reshape((-1,) + (1,) * len(ref))
    out = stats.gmean(np.maximum(stack, eps), axis=0, weights=w)
    return np.clip(out, stack.min(axis=0), stack.max(axis=0))


@dataclass
class CorrelationImage:
    """Per-pixel Pearson correlation of two maps over a sliding window."""

    values: np.ndarray
    window_halfwidth: int = DEFAULT_HALFWIDTH
    significance_threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(np.isnan(self.values)) or np.any(np.abs(self.values) > 1.0):
            msg = "correlation values must be finite and lie in [-1, 1]"
            raise InputError(msg)


def correlation_image(
    gmean_shape: np.ndarray,
    gmean_gradcam: np.ndarray,
    halfwidth: int = DEFAULT_HALFWIDTH,
    threshold: float = DEFAULT_THRESHOLD,
) -> CorrelationImage:
    """Pearson correlation of the ``(2h+1)^2`` windows centred on every pixel.

    Windows are clipped at the borders. Windows where either map is constant
    are degenerate and score 0.

    Raises:
        InputError: The maps differ in shape or are not 2-D.
        ParameterError: ``halfwidth < 1``.
    """
    a = np.asarray(gmean_shape, dtype=np.float64)
    b = np.asarray(gmean_gradcam, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        msg = (
            "correlation_image needs two 2-D maps of equal shape, "
            f"got {a.shape} and {b.shape}"
        )
        raise InputError(msg)
    if halfwidth < 1:
        msg = f"halfwidth must be >= 1, got {halfwidth}"
        raise ParameterError(msg)
    size = 2 * halfwidth + 1
    pad = ((halfwidth, halfwidth), (halfwidth, halfwidth))
    wa = sliding_window_view(np.pad(a, pad, constant_values=np.nan), (size, size))
    wb = sliding_window_view(np.pad(b, pad, constant_values=np.nan), (size, size))
    valid = ~np.isnan(wa)
    count = valid.sum(axis=(-1, -2))
    za = np.where(valid, wa, 0.0)
    zb = np.where(valid, wb, 0.0)
    mean_a = za.sum(axis=(-1, -2)) / count
    mean_b = zb.sum(axis=(-1, -2)) / count
    da = np.where(valid, wa - mean_a[..., None, None], 0.0)
    db = np.where(valid, wb - mean_b[..., None, None], 0.0)
    cov = (da * db).sum(axis=(-1, -2))
    ss_a = (da * da).sum(axis=(-1, -2))
    ss_b = (db * db).sum(axis=(-1, -2))
    scale_a = _DEGENERATE_RTOL * (1.0 + np.abs(mean_a))
    scale_b = _DEGENERATE_RTOL * (1.0 + np.abs(mean_b))
    ok = (np.sqrt(ss_a / count) > scale_a) & (np.sqrt(ss_b / count) > scale_b)
    r = np.zeros_like(cov)
    r[ok] = cov[ok] / np.sqrt(ss_a[ok] * ss_b[ok])
    _logger.debug(
        "Correlation image: %d of %d pixels degenerate", int((~ok).sum()), r.size
    )
    return CorrelationImage(np.clip(r, -1.0, 1.0), halfwidth, threshold)


@dataclass(frozen=True)
class RatioScores:
    """Fractions of pixels with strong positive, strong negative or weak correlation."""

    positive_ratio: float
    negative_ratio: float
    neutral_ratio: float
    threshold: float = DEFAULT_THRESHOLD
    halfwidth: int = DEFAULT_HALFWIDTH

    def to_dict(self) -> dict[str, Any]:
        return {
            "positive": self.positive_ratio,
            "negative": self.negative_ratio,
            "neutral": self.neutral_ratio,
            "threshold": self.threshold,
            "halfwidth": self.halfwidth,
        }


def ratio_scores(corr: CorrelationImage, threshold: float | None = None) -> RatioScores:
    """Count pixels above ``t`` and below ``-t`` (default: the image's threshold).

    Raises:
        ParameterError: ``t`` outside ``(0, 1]``.
    """
    t = corr.significance_threshold if threshold is None else threshold
    if not 0.0 < t <= 1.0:
        msg = f"ratio threshold must lie in (0, 1], got {t}"
        raise ParameterError(msg)
    total = corr.values.size
    positive = int(np.count_nonzero(corr.values > t))
    negative = int(np.count_nonzero(corr.values < -t))
    return RatioScores(
        positive_ratio=positive / total,
        negative_ratio=negative / total,
        neutral_ratio=(total - positive - negative) / total,
        threshold=t,
        halfwidth=corr.window_halfwidth,
    )


__all__ = [
    "DEFAULT_HALFWIDTH",
    "DEFAULT_THRESHOLD",
    "GMEAN_EPSILON",
    "CorrelationImage",
    "RatioScores",
    "correlation_image",
    "gmean",
    "ratio_scores",
    "shape_map",
]
