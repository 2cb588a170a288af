"""Gradient-weighted class activation maps.

For a convolutional activation ``A`` with ``K`` feature maps and the
pre-softmax score ``y_c`` of the target class::

    alpha_k = mean_ij  d y_c / d A_k[i, j]
    map     = ReLU(sum_k alpha_k * A_k)

The map is bilinearly upsampled to the image and, by default, max-normalised.
"""

from __future__ import annotations

import fnmatch
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from cellattn.core import ParameterSet, Tensor, grad, slice_axis, sum_all
from cellattn.data.transforms import resize_plane
from cellattn.models import EncoderConfig, Family, forward_logits
from cellattn.utils import ConfigurationError, InputError, ParameterError, UsageError


_logger = logging.getLogger("cellattn.explain")


@dataclass
class SaliencyMap:
    """Non-negative 2-D saliency aligned to an image.

    Attributes:
        values: ``(H, W)`` map, every value >= 0.
        source_image_id: Image the map was computed for.
        target_class: Class index whose score was differentiated.
        normalized: Whether ``values`` were max-scaled to ``[0, 1]``.
        layers: Activations the map was computed from.
    """

    values: np.ndarray
    source_image_id: str = ""
    target_class: int = 0
    normalized: bool = False
    layers: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            msg = f"SaliencyMap needs a 2-D map, got shape {self.values.shape}"
            raise InputError(msg)
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            msg = "SaliencyMap values must be finite and non-negative"
            raise InputError(msg)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def normalize(self) -> SaliencyMap:
        """Max-scaled copy; an all-zero map stays zero."""
        peak = float(self.values.max())
        values = self.values / peak if peak > 0 else self.values.copy()
        return replace(self, values=values, normalized=True)


def gradcam_from_activations(
    activations: np.ndarray, gradients: np.ndarray
) -> np.ndarray:
    """Combine ``(K, h, w)`` activations with their gradients into an ``(h, w)`` map."""
    a = np.asarray(activations, dtype=np.float64)
    g = np.asarray(gradients, dtype=np.float64)
    if a.ndim != 3 or a.shape != g.shape:
        msg = f"activations {a.shape} and gradients {g.shape} must both be (K, h, w)"
        raise InputError(msg)
    alpha = g.mean(axis=(1, 2))
    return np.maximum(np.tensordot(alpha, a, axes=1), 0.0)


def default_layer_selector(config: EncoderConfig) -> str:
    """The last convolutional activation of each backbone."""
    return "backbone.*.features" if config.family is Family.RGB else "backbone.features"


def select_layers(capture: dict[str, Tensor], selector: str) -> list[str]:
    """Captured activation names matching ``selector`` (exact or glob pattern).

    Raises:
        ConfigurationError: Nothing matches.
    """
    if selector in capture:
        return [selector]
    names = [n for n in capture if fnmatch.fnmatchcase(n, selector)]
    if not names:
        preview = ", ".join(sorted(capture)[:8])
        msg = (
            f"No activation matches layer selector {selector!r} "
            f"(available: {preview}...)"
        )
        raise ConfigurationError(msg)
    return names


def gradcam_layers(
    config: EncoderConfig,
    params: ParameterSet,
    image: Tensor | np.ndarray,
    target_class: int,
    layer_selector: str | None = None,
) -> dict[str, np.ndarray]:
    """Unnormalised upsampled map of every selected layer, keyed by layer name.

    Parameters are only read, so concurrent calls on shared parameters are safe.

    Raises:
        ParameterError: ``target_class`` is not a class index.
        UsageError: The image is a batch of several images, or a selected
            activation is not a convolutional feature map.
        ConfigurationError: The selector matches no activation.
    """
    if not 0 <= target_class < config.num_classes:
        msg = f"target_class must be in [0, {config.num_classes}), got {target_class}"
        raise ParameterError(msg)
    x = image if isinstance(image, Tensor) else Tensor(image)
    if x.ndim == 4 and x.shape[0] != 1:
        msg = f"gradcam explains one image at a time, got a batch of {x.shape[0]}"
        raise UsageError(msg)
    capture: dict[str, Tensor] = {}
    logits = forward_logits(x, config, params, training=False, capture=capture)
    names = select_layers(capture, layer_selector or default_layer_selector(config))
    for name in names:
        if capture[name].ndim != 4:
            msg = (
                f"Layer {name!r} has shape {capture[name].shape}; GradCam needs a "
                "convolutional (N, K, h, w) activation"
            )
            raise UsageError(msg)
    score = sum_all(slice_axis(logits, 1, target_class, target_class + 1))
    grads = grad(score, [capture[n] for n in names])
    height, width = x.shape[-2:]
    maps = {}
    for name, g in zip(names, grads, strict=True):
        cam = gradcam_from_activations(capture[name].data[0], g[0])
        maps[name] = np.maximum(resize_plane(cam, height, width), 0.0)
    _logger.debug("GradCam class %d over layers %s", target_class, names)
    return maps


def gradcam(
    config: EncoderConfig,
    params: ParameterSet,
    image: Tensor | np.ndarray,
    target_class: int,
    layer_selector: str | None = None,
    image_id: str = "",
    normalize: bool = True,
) -> SaliencyMap:
    """GradCam map of ``target_class`` for one image.

    When the selector matches several layers (one per RGB branch by default)
    their upsampled maps are summed.
    """
    maps = gradcam_layers(config, params, image, target_class, layer_selector)
    total = np.sum(list(maps.values()), axis=0)
    saliency = SaliencyMap(
        values=total,
        source_image_id=image_id,
        target_class=target_class,
        normalized=False,
        layers=list(maps),
    )
    return saliency.normalize() if normalize else saliency


def channel_focus(
    config: EncoderConfig,
    params: ParameterSet,
    image: np.ndarray,
    target_class: int,
) -> dict[str, float]:
    """Share of GradCam mass attributable to the red, green and blue channels.

    RGB models attribute each branch's map to its channel. MHL models weight
    the single map by each channel's intensity. Shares sum to 1; a zero map
    gives equal thirds.
    """
    names = ("red", "green", "blue")
    if config.family is Family.RGB:
        maps = gradcam_layers(config, params, image, target_class)
        mass = np.array(
            [
                sum(
                    float(m.sum())
                    for n, m in maps.items()
                    if n.startswith(f"backbone.{c}.")
                )
                for c in "rgb"
            ]
        )
    else:
        saliency = gradcam(config, params, image, target_class, normalize=False)
        img = np.asarray(image, dtype=np.float64).reshape(3, *saliency.shape)
        mass = np.array([float((saliency.values * img[c]).sum()) for c in range(3)])
    total = mass.sum()
    if total <= 0:
        return dict.fromkeys(names, 1.0 / 3.0)
    return {n: float(m / total) for n, m in zip(names, mass, strict=True)}


__all__ = [
    "SaliencyMap",
    "channel_focus",
    "default_layer_selector",
    "gradcam",
    "gradcam_from_activations",
    "gradcam_layers",
    "select_layers",
]
