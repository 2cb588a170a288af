"""Synthetic two-class fluorescence-cell images.

Channel layout follows the staining of the real cohort:

* red: vimentin filaments scattered around the nucleus, widely spread in
  normal cells and compact in metastasizing cells;
* green: F-actin boundary curves, 6-9 per normal cell and 4-5 per
  metastasizing cell;
* blue: one elliptical nucleus.

Every image is rendered from a generator seeded by ``(seed, image_id)`` so
images can be produced in any order or in parallel.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
from scipy import ndimage

from cellattn.utils import (
    CLASS_NAMES,
    ConfigurationError,
    PathLikeStr,
    derive_rng,
    ensure_dir,
)

from .io import save_image
from .manifest import GENERATOR_VERSION, DatasetManifest, ManifestEntry


_logger = logging.getLogger("cellattn.data")

RED, GREEN, BLUE = 0, 1, 2


@dataclass(frozen=True)
class SyntheticConfig:
    """Cohort size and appearance of the synthetic cells."""

    n_normal: int = 100
    n_meta: int = 120
    image_side: int = 64
    curve_count_normal: tuple[int, int] = (6, 9)
    curve_count_meta: tuple[int, int] = (4, 5)
    nucleus_intensity: float = 0.8
    actin_intensity: float = 0.7
    vimentin_intensity: float = 0.9
    vimentin_spread_normal: float = 0.28
    vimentin_spread_meta: float = 0.10
    vimentin_points: int = 60
    noise_sigma: float = 0.03

    def __post_init__(self) -> None:
        for name in ("curve_count_normal", "curve_count_meta"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.n_normal < 1 or self.n_meta < 1:
            msg = (
                f"both classes need at least one image, got n_normal={self.n_normal}, "
                f"n_meta={self.n_meta}"
            )
            raise ConfigurationError(msg)
        if self.image_side < 8:
            msg = f"image_side must be >= 8, got {self.image_side}"
            raise ConfigurationError(msg)
        for name in ("curve_count_normal", "curve_count_meta"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                msg = f"{name} must be a range 1 <= lo <= hi, got {(lo, hi)}"
                raise ConfigurationError(msg)
        for name in (
            "nucleus_intensity",
            "actin_intensity",
            "vimentin_intensity",
            "vimentin_spread_normal",
            "vimentin_spread_meta",
            "noise_sigma",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                msg = f"{name} must lie in [0, 1], got {value}"
                raise ConfigurationError(msg)
        if self.vimentin_points < 1:
            msg = f"vimentin_points must be positive, got {self.vimentin_points}"
            raise ConfigurationError(msg)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["curve_count_normal"] = list(self.curve_count_normal)
        data["curve_count_meta"] = list(self.curve_count_meta)
        return data


def _splat(side: int, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Binary raster of the in-bounds points."""
    canvas = np.zeros((side, side))
    yi, xi = np.rint(ys).astype(int), np.rint(xs).astype(int)
    keep = (yi >= 0) & (yi < side) & (xi >= 0) & (xi < side)
    canvas[yi[keep], xi[keep]] = 1.0
    return canvas


def _normalised_blur(canvas: np.ndarray, sigma: float) -> np.ndarray:
    blurred = ndimage.gaussian_filter(canvas, sigma)
    peak = blurred.max()
    return blurred / peak if peak > 0 else blurred


def render_cell(
    label: str, cfg: SyntheticConfig, rng: np.random.Generator
) -> np.ndarray:
    """One ``(3, side, side)`` image in ``[0, 1]``."""
    side = cfg.image_side
    normal = label == CLASS_NAMES[0]
    image = np.zeros((3, side, side))
    cy, cx = (side - 1) / 2 + rng.uniform(-0.05, 0.05, size=2) * side

    # Nucleus: rotated ellipse.
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    a, b = rng.uniform(0.10, 0.16, size=2) * side
    theta = rng.uniform(0.0, np.pi)
    u = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
    v = -(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta)
    nucleus = ((u / a) ** 2 + (v / b) ** 2 <= 1.0).astype(np.float64)
    image[BLUE] = ndimage.gaussian_filter(nucleus, 1.0) * cfg.nucleus_intensity

    # Actin: wobbling arcs around the nucleus.
    lo, hi = cfg.curve_count_normal if normal else cfg.curve_count_meta
    curves = np.zeros((side, side))
    for _ in range(int(rng.integers(lo, hi + 1))):
        radius = rng.uniform(0.25, 0.45) * side
        start = rng.uniform(0.0, 2 * np.pi)
        span = rng.uniform(np.pi / 3, np.pi)
        t = np.linspace(start, start + span, 8 * side)
        freq = rng.uniform(2.0, 5.0)
        wobble = 1.0 + 0.08 * np.sin(freq * t + rng.uniform(0, 2 * np.pi))
        curves = np.maximum(
            curves,
            _splat(
                side,
                cy + radius * wobble * np.sin(t),
                cx + radius * wobble * np.cos(t),
            ),
        )
    image[GREEN] = _normalised_blur(curves, 0.7) * cfg.actin_intensity

    # Vimentin: filament fragments spread around the nucleus.
    spread = (cfg.vimentin_spread_normal if normal else cfg.vimentin_spread_meta) * side
    pts = rng.normal(0.0, spread, size=(cfg.vimentin_points, 2))
    sigma = 1.2
    fragments = ndimage.gaussian_filter(
        _splat(side, cy + pts[:, 0], cx + pts[:, 1]), sigma
    ) * (2 * np.pi * sigma**2)
    image[RED] = np.clip(fragments, 0.0, 1.0) * cfg.vimentin_intensity

    if cfg.noise_sigma:
        image += rng.normal(0.0, cfg.noise_sigma, size=image.shape)
    return np.clip(image, 0.0, 1.0)


def red_radial_spread(image: np.ndarray, level: float = 0.3) -> float:
    """Mean distance from the centre of bright red pixels, as a fraction of side.

    A one-feature linear probe on this value separates the two classes.
    """
    red = np.asarray(image)[RED]
    side = red.shape[-1]
    yy, xx = np.mgrid[0:side, 0:side]
    mask = red > level * red.max() if red.max() > 0 else np.zeros_like(red, dtype=bool)
    if not mask.any():
        return 0.0
    c = (side - 1) / 2
    dist = np.hypot(yy - c, xx - c)
    return float((dist * red)[mask].sum() / red[mask].sum() / side)


def image_ids(cfg: SyntheticConfig) -> list[tuple[str, str]]:
    """``(image_id, label)`` pairs in manifest order: normal first."""
    return [(f"normal_{i:03d}", CLASS_NAMES[0]) for i in range(cfg.n_normal)] + [
        (f"metastasizing_{i:03d}", CLASS_NAMES[1]) for i in range(cfg.n_meta)
    ]


def render_dataset(
    cfg: SyntheticConfig, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """In-memory cohort: ``(images (N, 3, s, s), labels (N,), ids)``."""
    pairs = image_ids(cfg)
    images = np.stack(
        [
            render_cell(label, cfg, derive_rng(seed, image_id))
            for image_id, label in pairs
        ]
    )
    labels = np.array([CLASS_NAMES.index(label) for _, label in pairs], dtype=np.int64)
    return images, labels, [image_id for image_id, _ in pairs]


def generate_synthetic_dataset(
    cfg: SyntheticConfig,
    out_dir: PathLikeStr,
    seed: int = 0,
    jobs: int = 1,
) -> DatasetManifest:
    """Render the cohort as PNGs under ``out_dir/images`` and write ``manifest.json``.

    Raises:
        DataIOError: ``out_dir`` is not writable.
    """
    root = ensure_dir(out_dir)
    image_dir = ensure_dir(root / "images")
    pairs = image_ids(cfg)

    def write_one(pair: tuple[str, str]) -> ManifestEntry:
        image_id, label = pair
        image = render_cell(label, cfg, derive_rng(seed, image_id))
        rel = Path("images") / f"{image_id}.png"
        save_image(image_dir / rel.name, image)
        return ManifestEntry(image_id=image_id, path=rel.as_posix(), label=label)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(write_one, pairs))
    else:
        entries = [write_one(p) for p in pairs]

    manifest = DatasetManifest(
        entries=entries,
        seed=seed,
        image_side=cfg.image_side,
        generator_version=GENERATOR_VERSION,
        root=root,
    )
    manifest.save(root / "manifest.json")
    _logger.info(
        "Generated %d images (%d normal, %d metastasizing) in %s",
        len(entries),
        cfg.n_normal,
        cfg.n_meta,
        root,
    )
    return manifest


__all__ = [
    "SyntheticConfig",
    "generate_synthetic_dataset",
    "image_ids",
    "red_radial_spread",
    "render_cell",
    "render_dataset",
]
