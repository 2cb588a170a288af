"""8-bit PNG storage of float images."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from cellattn.utils import DataIOError, InputError, PathLikeStr


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Quantise ``[0, 1]`` floats to bytes (round half to even, clipped)."""
    scaled = np.rint(np.asarray(values, dtype=np.float64) * 255.0)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def save_image(path: PathLikeStr, image: np.ndarray) -> Path:
    """Write a ``(3, H, W)`` image in ``[0, 1]`` as an RGB PNG.

    A ``(H, W)`` array is written as greyscale.
    """
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[0] == 3:
        pil = Image.fromarray(np.ascontiguousarray(to_uint8(arr.transpose(1, 2, 0))))
    elif arr.ndim == 2:
        pil = Image.fromarray(to_uint8(arr))
    else:
        msg = f"save_image expects (3, H, W) or (H, W), got shape {arr.shape}"
        raise InputError(msg)
    p = Path(path)
    try:
        pil.save(p, format="PNG", optimize=False)
    except OSError as e:
        msg = f"Cannot write image {p}: {e}"
        raise DataIOError(msg) from e
    return p


def save_rgb(path: PathLikeStr, rgb: np.ndarray) -> Path:
    """Write an ``(H, W, 3)`` float array in ``[0, 1]`` as an RGB PNG."""
    return save_image(path, np.asarray(rgb).transpose(2, 0, 1))


def load_image(path: PathLikeStr) -> np.ndarray:
    """Read a PNG as a float32 ``(3, H, W)`` image in ``[0, 1]`` (bytes / 255)."""
    try:
        with Image.open(path) as pil:
            data = np.asarray(pil.convert("RGB"), dtype=np.float32)
    except (OSError, UnidentifiedImageError) as e:
        msg = f"Cannot read image {path}: {e}"
        raise DataIOError(msg) from e
    return (data / 255.0).transpose(2, 0, 1).copy()


__all__ = [
    "load_image",
    "save_image",
    "save_rgb",
    "to_uint8",
]
