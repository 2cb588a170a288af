"""Resampling, augmentation and ZCA whitening of ``(C, H, W)`` images."""

from __future__ import annotations

import logging
from enum import Enum

import numpy as np
from scipy import ndimage

from cellattn.utils import ConfigurationError, InputError, ParameterError, UsageError


_logger = logging.getLogger("cellattn.data")

MAX_ROTATION_DEG = 15.0
REFERENCE_SIDE = 512
REFERENCE_SHIFT = 20
MAX_FULL_ZCA_DIM = 4096
DEFAULT_NOISE_SIGMA = 0.02


class AugmentKind(str, Enum):
    ROTATE = "rotate"
    WIDTH_SHIFT = "width_shift"
    HEIGHT_SHIFT = "height_shift"
    ZCA = "zca"
    NOISE = "noise"


DEFAULT_AUGMENTS: tuple[AugmentKind, ...] = (
    AugmentKind.ROTATE,
    AugmentKind.WIDTH_SHIFT,
    AugmentKind.HEIGHT_SHIFT,
    AugmentKind.ZCA,
)


def parse_augment_kind(value: str | AugmentKind) -> AugmentKind:
    if isinstance(value, AugmentKind):
        return value
    try:
        return AugmentKind(str(value).strip().lower())
    except ValueError:
        known = ", ".join(k.value for k in AugmentKind)
        msg = f"Unknown augmentation {value!r} (known: {known})"
        raise ParameterError(msg) from None


def _check_image(image: np.ndarray, op: str) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or min(arr.shape) < 1:
        msg = f"{op} expects a (C, H, W) image, got shape {arr.shape}"
        raise InputError(msg)
    return arr


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def resize_plane(plane: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a 2-D array with half-pixel-centred sampling."""
    arr = np.asarray(plane, dtype=np.float64)
    if arr.shape == (height, width):
        return arr.copy()
    zoom = (height / arr.shape[0], width / arr.shape[1])
    out = ndimage.zoom(arr, zoom, order=1, mode="nearest", grid_mode=True)
    if out.shape != (height, width):
        msg = f"resize produced {out.shape}, expected {(height, width)}"
        raise InputError(msg)
    return out


def resample_image(image: np.ndarray, side: int) -> np.ndarray:
    """Bilinear resample of every channel to ``side x side``.

    Raises:
        ParameterError: ``side`` is below 8.
        InputError: The image is not a non-empty ``(C, H, W)`` array.
    """
    if side < 8:
        msg = f"resample side must be >= 8, got {side}"
        raise ParameterError(msg)
    arr = _check_image(image, "resample_image")
    return np.stack([resize_plane(plane, side, side) for plane in arr])


# ---------------------------------------------------------------------------
# Geometric and photometric augmentations
# ---------------------------------------------------------------------------


def max_shift(side: int) -> int:
    """Largest shift in pixels: 20 at side 512, scaled proportionally."""
    return max(1, round(REFERENCE_SHIFT * side / REFERENCE_SIDE))


def rotate(image: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate about the image centre; bilinear sampling, zero fill."""
    arr = _check_image(image, "rotate")
    if angle_deg == 0:
        return arr.copy()
    return ndimage.rotate(
        arr, angle_deg, axes=(2, 1), reshape=False, order=1, mode="constant", cval=0.0
    )


def shift(image: np.ndarray, dx: int = 0, dy: int = 0) -> np.ndarray:
    """Integer translation by ``dx`` columns and ``dy`` rows, zero fill."""
    arr = _check_image(image, "shift")
    return ndimage.shift(arr, (0, dy, dx), order=0, mode="constant", cval=0.0)


def add_noise(
    image: np.ndarray, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """Additive Gaussian noise, clipped back to ``[0, 1]``."""
    if sigma < 0:
        msg = f"noise sigma must be non-negative, got {sigma}"
        raise ParameterError(msg)
    arr = _check_image(image, "add_noise")
    return np.clip(arr + rng.normal(0.0, sigma, size=arr.shape), 0.0, 1.0)


def rescale_unit(image: np.ndarray) -> np.ndarray:
    """Min-max rescale to ``[0, 1]``; a constant image maps to zeros."""
    lo, hi = float(image.min()), float(image.max())
    if hi - lo <= 0:
        return np.zeros_like(image, dtype=np.float64)
    return (image - lo) / (hi - lo)


class ZcaWhitener:
    """Zero-phase component analysis fitted on a batch of images.

    With ``patch=None`` every pixel of every channel is one dimension, so the
    covariance is ``(C*H*W)^2``. With ``patch=p`` the images are cut into
    non-overlapping ``p x p`` tiles that share one ``(C*p*p)^2`` covariance.

    With ``standardize`` (the default) the centred rows are divided by their
    overall standard deviation before the eigendecomposition, so ``epsilon``
    is relative to unit pixel variance instead of the raw variance of
    ``[0, 1]`` images (about 0.08).
    """

    def __init__(
        self,
        epsilon: float = 1e-2,
        patch: int | None = None,
        standardize: bool = True,
    ) -> None:
        if epsilon <= 0:
            msg = f"ZCA epsilon must be positive, got {epsilon}"
            raise ParameterError(msg)
        if patch is not None and patch < 1:
            msg = f"ZCA patch must be positive, got {patch}"
            raise ParameterError(msg)
        self.epsilon = epsilon
        self.patch = patch
        self.standardize = standardize
        self.scale_ = 1.0
        self.mean_: np.ndarray | None = None
        self.matrix_: np.ndarray | None = None
        self._shape: tuple[int, ...] | None = None

    @staticmethod
    def auto_patch(channels: int, side: int) -> int | None:
        """``None`` when a full-image covariance is affordable, else 4."""
        return None if channels * side * side <= MAX_FULL_ZCA_DIM else 4

    @property
    def fitted(self) -> bool:
        return self.matrix_ is not None

    def _rows(self, images: np.ndarray) -> np.ndarray:
        n, c, h, w = images.shape
        if self.patch is None:
            return images.reshape(n, c * h * w)
        p = self.patch
        if h % p or w % p:
            msg = f"image {h}x{w} is not divisible into {p}x{p} ZCA patches"
            raise ConfigurationError(msg)
        tiles = images.reshape(n, c, h // p, p, w // p, p).transpose(0, 2, 4, 1, 3, 5)
        return tiles.reshape(-1, c * p * p)

    def _images(self, rows: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        n, c, h, w = shape
        if self.patch is None:
            return rows.reshape(shape)
        p = self.patch
        tiles = rows.reshape(n, h // p, w // p, c, p, p).transpose(0, 3, 1, 4, 2, 5)
        return tiles.reshape(shape)

    def fit(self, images: np.ndarray) -> ZcaWhitener:
        """Estimate the mean and whitening matrix from ``(N, C, H, W)`` images."""
        batch = np.asarray(images, dtype=np.float64)
        if batch.ndim != 4 or len(batch) < 2:
            msg = f"ZCA needs a batch of at least 2 images, got shape {batch.shape}"
            raise InputError(msg)
        dim = int(np.prod(batch.shape[1:]))
        if self.patch is None and dim > MAX_FULL_ZCA_DIM:
            msg = (
                f"full-image ZCA over {dim} dimensions is too large; "
                "set a patch size"
            )
            raise ConfigurationError(msg)
        rows = self._rows(batch)
        mean = rows.mean(axis=0)
        centred = rows - mean
        scale = float(centred.std()) if self.standardize else 1.0
        if scale <= 0.0:
            scale = 1.0
        centred = centred / scale
        cov = centred.T @ centred / len(centred)
        eigval, eigvec = np.linalg.eigh(cov)
        eigval = np.clip(eigval, 0.0, None)
        self.mean_ = mean
        self.scale_ = scale
        # 1/scale folded in
        self.matrix_ = (eigvec / np.sqrt(eigval + self.epsilon)) @ eigvec.T / scale
        self._shape = batch.shape[1:]
        _logger.debug(
            "Fitted ZCA on %d images (%d dims, patch=%s)",
            len(batch),
            cov.shape[0],
            self.patch,
        )
        return self

    def transform(self, images: np.ndarray, rescale: bool = False) -> np.ndarray:
        """Whiten ``(N, C, H, W)`` images, or a single ``(C, H, W)`` image.

        Raises:
            UsageError: :meth:`fit` has not been called.
            InputError: Image shape differs from the fitted shape.
        """
        if self.mean_ is None or self.matrix_ is None:
            msg = "ZcaWhitener.transform called before fit"
            raise UsageError(msg)
        arr = np.asarray(images, dtype=np.float64)
        single = arr.ndim == 3
        batch = arr[None] if single else arr
        if batch.shape[1:] != self._shape:
            msg = f"ZCA fitted on {self._shape}, got images of shape {batch.shape[1:]}"
            raise InputError(msg)
        out = self._images((self._rows(batch) - self.mean_) @ self.matrix_, batch.shape)
        if rescale:
            out = np.stack([rescale_unit(img) for img in out])
        return out[0] if single else out


def augment(
    image: np.ndarray,
    kind: AugmentKind | str,
    rng: np.random.Generator,
    whitener: ZcaWhitener | None = None,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
) -> np.ndarray:
    """Apply one randomly parameterised augmentation.

    Rotation angles are uniform in ``[-15, 15]`` degrees; shifts are uniform
    integers up to :func:`max_shift`. ``zca`` needs a fitted ``whitener`` and
    is rescaled to ``[0, 1]``.

    Raises:
        ParameterError: Unknown ``kind``.
        UsageError: ``zca`` without a fitted whitener.
    """
    kind = parse_augment_kind(kind)
    arr = _check_image(image, "augment")
    side = arr.shape[-1]
    if kind is AugmentKind.ROTATE:
        out = rotate(arr, float(rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG)))
    elif kind is AugmentKind.WIDTH_SHIFT:
        m = max_shift(side)
        out = shift(arr, dx=int(rng.integers(-m, m + 1)))
    elif kind is AugmentKind.HEIGHT_SHIFT:
        m = max_shift(arr.shape[-2])
        out = shift(arr, dy=int(rng.integers(-m, m + 1)))
    elif kind is AugmentKind.NOISE:
        out = add_noise(arr, noise_sigma, rng)
    else:
        if whitener is None or not whitener.fitted:
            msg = "zca augmentation needs a fitted ZcaWhitener"
            raise UsageError(msg)
        out = whitener.transform(arr, rescale=True)
    return np.clip(out, 0.0, 1.0)


__all__ = [
    "DEFAULT_AUGMENTS",
    "AugmentKind",
    "ZcaWhitener",
    "add_noise",
    "augment",
    "max_shift",
    "parse_augment_kind",
    "resample_image",
    "rescale_unit",
    "resize_plane",
    "rotate",
    "shift",
]
