"""Heatmap overlays and on-disk export of saliency and correlation maps."""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib
import numpy as np

from cellattn.core import save_tensor
from cellattn.data.io import save_image, save_rgb
from cellattn.utils import (
    InputError,
    ParameterError,
    PathLikeStr,
    ensure_dir,
    write_json,
)

from .aggregation import CorrelationImage, RatioScores
from .gradcam import SaliencyMap


_logger = logging.getLogger("cellattn.explain")

DEFAULT_COLORMAP = "jet"


def colorize(values: np.ndarray, colormap: str = DEFAULT_COLORMAP) -> np.ndarray:
    """Map ``[0, 1]`` values through a matplotlib colormap to ``(H, W, 3)`` RGB.

    Raises:
        ParameterError: Unknown colormap name.
    """
    try:
        cmap = matplotlib.colormaps[colormap]
    except KeyError:
        msg = f"Unknown colormap {colormap!r}"
        raise ParameterError(msg) from None
    return np.asarray(cmap(np.clip(values, 0.0, 1.0)), dtype=np.float64)[..., :3]


def overlay_heatmap(
    image: np.ndarray,
    saliency: SaliencyMap | np.ndarray,
    colormap: str = DEFAULT_COLORMAP,
) -> np.ndarray:
    """Blend a colormapped saliency map over a ``(3, H, W)`` image.

    Each pixel mixes image and colour with weight ``s`` (saliency clipped to
    ``[0, 1]``): zero saliency leaves the image untouched and full saliency
    shows the top colour of the map. Returns ``(3, H, W)`` in ``[0, 1]``.

    Raises:
        InputError: Image and saliency do not align.
    """
    img = np.asarray(image, dtype=np.float64)
    if isinstance(saliency, SaliencyMap):
        values = saliency.values
    else:
        values = np.asarray(saliency)
    if img.ndim != 3 or img.shape[0] != 3 or img.shape[1:] != values.shape:
        msg = (
            "overlay needs a (3, H, W) image matching the map, "
            f"got {img.shape} and {values.shape}"
        )
        raise InputError(msg)
    s = np.clip(values, 0.0, 1.0)
    colours = colorize(s, colormap).transpose(2, 0, 1)
    return (1.0 - s) * img + s * colours


def save_saliency(
    saliency: SaliencyMap,
    directory: PathLikeStr,
    stem: str,
    image: np.ndarray | None = None,
    colormap: str = DEFAULT_COLORMAP,
) -> list[Path]:
    """Write ``<stem>.tnsr`` and a PNG render (an overlay when ``image`` is given)."""
    out = ensure_dir(directory)
    written = [save_tensor(out / f"{stem}.tnsr", saliency.values)]
    view = saliency if saliency.normalized else saliency.normalize()
    if image is not None:
        blended = overlay_heatmap(image, view, colormap)
        written.append(save_image(out / f"{stem}.png", blended))
    else:
        written.append(save_rgb(out / f"{stem}.png", colorize(view.values, colormap)))
    _logger.debug("Wrote saliency %s to %s", stem, out)
    return written


def save_map(
    values: np.ndarray,
    directory: PathLikeStr,
    stem: str,
    colormap: str = DEFAULT_COLORMAP,
) -> list[Path]:
    """Write a non-negative map as TNSR plus a max-normalised colour PNG."""
    out = ensure_dir(directory)
    peak = float(np.max(values)) if np.size(values) else 0.0
    scaled = values / peak if peak > 0 else np.zeros_like(values)
    return [
        save_tensor(out / f"{stem}.tnsr", values),
        save_rgb(out / f"{stem}.png", colorize(scaled, colormap)),
    ]


def save_correlation(
    corr: CorrelationImage,
    directory: PathLikeStr,
    stem: str,
    colormap: str = "coolwarm",
) -> list[Path]:
    """Write the correlation values as TNSR and a diverging-colour PNG."""
    out = ensure_dir(directory)
    return [
        save_tensor(out / f"{stem}.tnsr", corr.values),
        save_rgb(out / f"{stem}.png", colorize((corr.values + 1.0) / 2.0, colormap)),
    ]


def write_ratio_json(scores: RatioScores, path: PathLikeStr) -> Path:
    return write_json(path, scores.to_dict())


__all__ = [
    "DEFAULT_COLORMAP",
    "colorize",
    "overlay_heatmap",
    "save_correlation",
    "save_map",
    "save_saliency",
    "write_ratio_json",
]
