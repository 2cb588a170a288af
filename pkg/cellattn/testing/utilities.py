"""Testing utilities: gradient oracles, tiny models and reference implementations."""

from __future__ import annotations

from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager

import numpy as np

from cellattn.core import ParameterSet, Tensor, grad
from cellattn.models import BackboneConfig, EncoderConfig, HeadWeights


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    """``|a - n| / max(|a|, |n|, floor)``."""
    scale = max(abs(analytic), abs(numeric), floor)
    return abs(analytic - numeric) / scale


def numerical_gradient(
    loss_fn: Callable[[], float],
    array: np.ndarray,
    index: tuple[int, ...],
    eps: float = 1e-5,
) -> float:
    """Central finite difference of ``loss_fn`` w.r.t. ``array[index]``.

    ``array`` is perturbed in place and restored afterwards.
    """
    original = array[index]
    try:
        array[index] = original + eps
        plus = loss_fn()
        array[index] = original - eps
        minus = loss_fn()
    finally:
        array[index] = original
    return (plus - minus) / (2.0 * eps)


def check_gradients(
    build_loss: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    samples: int = 10,
    eps: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between autodiff and finite differences.

    ``build_loss`` must rebuild the graph from ``inputs`` on every call, since
    graphs are single-use. Up to ``samples`` random entries of each input are
    checked. Use float64 inputs.

    Example:
        ```python
        x = Tensor(rng.normal(size=(2, 3)), dtype=np.float64)
        err = check_gradients(lambda: sum_all(relu(x)), [x])
        assert err < 1e-3
        ```
    """
    rng = rng or np.random.default_rng(0)
    analytic = grad(build_loss(), inputs)
    worst = 0.0
    for tensor, g in zip(inputs, analytic, strict=True):
        flat = rng.choice(tensor.size, size=min(samples, tensor.size), replace=False)
        for pos in flat:
            index = np.unravel_index(int(pos), tensor.shape)
            numeric = numerical_gradient(
                lambda: build_loss().item(), tensor.data, index, eps
            )
            worst = max(worst, relative_error(float(g[index]), numeric))
    return worst


@contextmanager
def override_parameter(
    params: ParameterSet, name: str, value: np.ndarray
) -> Iterator[Tensor]:
    """Temporarily replace the values of one parameter.

    Example:
        with override_parameter(params, "mlp.out.bias", np.array([5.0, 0.0])):
            probs = forward(image, config, params)
    """
    tensor = params.get(name)
    saved = tensor.data.copy()
    tensor.data[...] = value
    try:
        yield tensor
    finally:
        tensor.data[...] = saved


def tiny_encoder_config(
    family: str = "mhl",
    kind: str = "dense_concat",
    side: int = 16,
    heads: int = 2,
    dropout: float = 0.0,
) -> EncoderConfig:
    """A model small enough for finite-difference checks and quick training."""
    backbone = BackboneConfig(
        kind=kind,
        blocks=2,
        base_filters=2,
        growth=2,
        layers_per_block=2,
        downsample_stages=2,
        image_side=side,
    )
    return EncoderConfig(
        family=family,
        heads=heads,
        d_model=2,
        backbone=backbone,
        mlp_dims=(8,),
        mlp_dropout=dropout,
    )


def random_image(rng: np.random.Generator, side: int = 16) -> np.ndarray:
    """Uniform ``(3, side, side)`` float32 image in ``[0, 1)``."""
    return rng.random((3, side, side)).astype(np.float32)


def random_images(rng: np.random.Generator, n: int, side: int = 16) -> np.ndarray:
    return rng.random((n, 3, side, side)).astype(np.float32)


def pairwise_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """AUC by counting concordant positive/negative pairs, ties counting half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos, neg = scores[labels == 1], scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def attention_oracle(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Scaled dot-product attention of 2-D ``(L, d)`` inputs with explicit loops."""
    q, k, v = (np.asarray(a, dtype=np.float64) for a in (q, k, v))
    rows, cols = q.shape[0], k.shape[0]
    scale = 1.0 / np.sqrt(q.shape[1])
    out = np.zeros((rows, v.shape[1]))
    for i in range(rows):
        scores = [
            scale * sum(q[i, d] * k[j, d] for d in range(q.shape[1]))
            for j in range(cols)
        ]
        peak = max(scores)
        weights = [np.exp(s - peak) for s in scores]
        norm = sum(weights)
        for j in range(cols):
            out[i] += weights[j] / norm * v[j]
    return out


def multi_head_oracle(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, weights: HeadWeights
) -> np.ndarray:
    """Projected heads, concatenated and mixed by ``W_O``, for ``(L, d)`` inputs."""
    heads = [
        attention_oracle(
            np.asarray(q, np.float64) @ weights.w_q[i].data.astype(np.float64),
            np.asarray(k, np.float64) @ weights.w_k[i].data.astype(np.float64),
            np.asarray(v, np.float64) @ weights.w_v[i].data.astype(np.float64),
        )
        for i in range(weights.heads)
    ]
    return np.concatenate(heads, axis=-1) @ weights.w_o.data.astype(np.float64)


__all__ = [
    "attention_oracle",
    "check_gradients",
    "multi_head_oracle",
    "numerical_gradient",
    "override_parameter",
    "pairwise_auc",
    "random_image",
    "random_images",
    "relative_error",
    "tiny_encoder_config",
]
