"""Local (GradCam) and global (geometric mean, correlation) explanations."""

from .aggregation import (
    DEFAULT_HALFWIDTH,
    DEFAULT_THRESHOLD,
    GMEAN_EPSILON,
    CorrelationImage,
    RatioScores,
    correlation_image,
    gmean,
    ratio_scores,
    shape_map,
)
from .gradcam import (
    SaliencyMap,
    channel_focus,
    default_layer_selector,
    gradcam,
    gradcam_from_activations,
    gradcam_layers,
    select_layers,
)
from .render import (
    DEFAULT_COLORMAP,
    colorize,
    overlay_heatmap,
    save_correlation,
    save_map,
    save_saliency,
    write_ratio_json,
)


__all__ = [
    "DEFAULT_COLORMAP",
    "DEFAULT_HALFWIDTH",
    "DEFAULT_THRESHOLD",
    "GMEAN_EPSILON",
    "CorrelationImage",
    "RatioScores",
    "SaliencyMap",
    "channel_focus",
    "colorize",
    "correlation_image",
    "default_layer_selector",
    "gmean",
    "gradcam",
    "gradcam_from_activations",
    "gradcam_layers",
    "overlay_heatmap",
    "ratio_scores",
    "save_correlation",
    "save_map",
    "save_saliency",
    "select_layers",
    "shape_map",
    "write_ratio_json",
]
