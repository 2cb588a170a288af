"""Scaled dot-product and multi-head attention over backbone signals.

Signals are ``(L, d_model)`` matrices, or ``(N, L, d_model)`` batches. The RGB
family builds the upper triangle of the channel-pair matrix::

    D_head = | dh(R,R)  dh(R,G)  dh(R,B) |
             |    .     dh(G,G)  dh(G,B) |
             |    .        .     dh(B,B) |

where ``dh(i, j)`` is a two-head attention block fed queries from channel
``i`` and keys/values from channel ``j``. The MHL family is a single
self-attention block over the full-image signal.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from cellattn.core import (
    ParameterSet,
    Tensor,
    concat,
    glorot_uniform,
    matmul,
    scale,
    slice_axis,
    softmax,
    transpose,
)
from cellattn.utils import DimensionError, InputError, ParameterError

from .config import EncoderConfig, QuerySource


_logger = logging.getLogger("cellattn.models")

InspectionHook = Callable[[str, Tensor], None]
"""Called as ``hook(tag, weights)`` with every attention weight matrix."""

CHANNELS = ("r", "g", "b")
RGB_PAIRS: tuple[tuple[int, int], ...] = (
    (0, 0),
    (0, 1),
    (0, 2),
    (1, 1),
    (1, 2),
    (2, 2),
)


@dataclass
class HeadWeights:
    """Projection matrices of one multi-head attention block.

    Attributes:
        w_q: Per-head query projections, each ``(d_model, d_k)``.
        w_k: Per-head key projections, each ``(d_model, d_k)``.
        w_v: Per-head value projections, each ``(d_model, d_v)``.
        w_o: Output projection ``(heads * d_v, d_model)``.
    """

    w_q: list[Tensor]
    w_k: list[Tensor]
    w_v: list[Tensor]
    w_o: Tensor

    def __post_init__(self) -> None:
        if not (len(self.w_q) == len(self.w_k) == len(self.w_v)) or not self.w_q:
            msg = (
                f"HeadWeights needs the same positive number of Q/K/V projections, "
                f"got {len(self.w_q)}/{len(self.w_k)}/{len(self.w_v)}"
            )
            raise ParameterError(msg)
        d_model, d_k = self.w_q[0].shape
        d_v = self.w_v[0].shape[1]
        for c in range(self.heads):
            qk = (self.w_q[c].shape, self.w_k[c].shape)
            if qk != ((d_model, d_k), (d_model, d_k)):
                raise DimensionError(
                    f"head {c} Q/K projection", self.w_q[c].shape, self.w_k[c].shape
                )
            if self.w_v[c].shape != (d_model, d_v):
                raise DimensionError(f"head {c} V projection", self.w_v[c].shape)
        if self.w_o.shape != (self.heads * d_v, d_model):
            raise DimensionError(
                "output projection",
                self.w_o.shape,
                (self.heads * d_v, d_model),
            )

    @property
    def heads(self) -> int:
        return len(self.w_q)

    @property
    def d_model(self) -> int:
        return self.w_q[0].shape[0]

    @property
    def d_k(self) -> int:
        return self.w_q[0].shape[1]

    @property
    def d_v(self) -> int:
        return self.w_v[0].shape[1]

    @classmethod
    def from_params(cls, params: ParameterSet, prefix: str, heads: int) -> HeadWeights:
        return cls(
            w_q=[params.get(f"{prefix}.w_q{c}") for c in range(heads)],
            w_k=[params.get(f"{prefix}.w_k{c}") for c in range(heads)],
            w_v=[params.get(f"{prefix}.w_v{c}") for c in range(heads)],
            w_o=params.get(f"{prefix}.w_o"),
        )

    @classmethod
    def identity(
        cls, d_model: int, heads: int = 1, dtype: npt.DTypeLike = None
    ) -> HeadWeights:
        """Identity projections; with one head the block reduces to plain attention."""
        eye = np.eye(d_model)
        return cls(
            w_q=[Tensor(eye, dtype=dtype) for _ in range(heads)],
            w_k=[Tensor(eye, dtype=dtype) for _ in range(heads)],
            w_v=[Tensor(eye, dtype=dtype) for _ in range(heads)],
            w_o=Tensor(np.vstack([eye] * heads) / heads, dtype=dtype),
        )


def init_head_weights(
    params: ParameterSet,
    prefix: str,
    config: EncoderConfig,
    rng: np.random.Generator,
) -> HeadWeights:
    """Register fresh projections for one attention block under ``prefix``."""
    d_model, d_k, d_v = config.d_model, config.key_dim, config.value_dim
    for c in range(config.heads):
        params.bind(f"{prefix}.w_q{c}", glorot_uniform((d_model, d_k), rng))
        params.bind(f"{prefix}.w_k{c}", glorot_uniform((d_model, d_k), rng))
        params.bind(f"{prefix}.w_v{c}", glorot_uniform((d_model, d_v), rng))
    params.bind(f"{prefix}.w_o", glorot_uniform((config.heads * d_v, d_model), rng))
    return HeadWeights.from_params(params, prefix, config.heads)


def scaled_dot_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    hook: InspectionHook | None = None,
    tag: str = "attention",
) -> Tensor:
    """``softmax(Q K^T / sqrt(d_k)) V``.

    Args:
        q: Queries ``(..., L_q, d_k)``.
        k: Keys ``(..., L, d_k)``.
        v: Values ``(..., L, d_v)``.
        hook: Receives ``(tag, weights)`` with the row-stochastic weight matrix.
        tag: Label passed to ``hook``.

    Raises:
        DimensionError: Q and K disagree on ``d_k`` or K and V on row count.
    """
    if q.ndim < 2 or q.ndim != k.ndim or k.ndim != v.ndim:
        raise DimensionError("scaled_dot_attention", q.shape, k.shape, v.shape)
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(
            "scaled_dot_attention", q.shape, k.shape, detail="Q/K key dims differ"
        )
    if k.shape[-2] != v.shape[-2] or q.shape[:-2] != k.shape[:-2]:
        raise DimensionError(
            "scaled_dot_attention", k.shape, v.shape, detail="K/V rows differ"
        )
    logits = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(q.shape[-1]))
    weights = softmax(logits, axis=-1)
    if hook is not None:
        hook(tag, weights)
    return matmul(weights, v)


def multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    weights: HeadWeights,
    n: int | None = None,
    hook: InspectionHook | None = None,
    tag: str = "mha",
) -> Tensor:
    """``Concat(head_1, ..., head_n) W_O``.

    ``head_c = AT(Q W_Q^c, K W_K^c, V W_V^c)``.

    Raises:
        ParameterError: ``n`` is below 1.
        DimensionError: ``n`` or the signal width disagrees with ``weights``.
    """
    n = weights.heads if n is None else n
    if n < 1:
        msg = f"multi_head_attention needs n >= 1, got {n}"
        raise ParameterError(msg)
    if n != weights.heads:
        raise DimensionError(
            "multi_head_attention", (n,), (weights.heads,), detail="head count"
        )
    for name, t in (("Q", q), ("K", k), ("V", v)):
        if t.shape[-1] != weights.d_model:
            raise DimensionError(
                "multi_head_attention",
                t.shape,
                (weights.d_model,),
                detail=f"{name} width vs d_model",
            )
    heads = [
        scaled_dot_attention(
            matmul(q, weights.w_q[c]),
            matmul(k, weights.w_k[c]),
            matmul(v, weights.w_v[c]),
            hook=hook,
            tag=f"{tag}.head{c}",
        )
        for c in range(n)
    ]
    joined = heads[0] if n == 1 else concat(heads, axis=-1)
    return matmul(joined, weights.w_o)


def isolate_channels(image: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Split a ``(3, H, W)`` or ``(N, 3, H, W)`` image into R, G and B planes.

    Each plane keeps a singleton channel axis so that concatenating the three
    along it restores the input.

    Raises:
        InputError: The image does not have exactly three channels.
    """
    axis = image.ndim - 3
    if image.ndim not in (3, 4) or image.shape[axis] != 3:
        msg = f"isolate_channels expects 3 channels, got image of shape {image.shape}"
        raise InputError(msg)
    r, g, b = (slice_axis(image, axis, c, c + 1) for c in range(3))
    return r, g, b


def build_dhead_rgb(
    r: Tensor,
    g: Tensor,
    b: Tensor,
    weights: Sequence[HeadWeights],
    query_source: QuerySource = QuerySource.ROW,
    hook: InspectionHook | None = None,
) -> list[Tensor]:
    """The six upper-triangular channel-pair attention blocks.

    Returns ``dh(R,R), dh(R,G), dh(R,B), dh(G,G), dh(G,B), dh(B,B)`` in that
    order. ``weights`` holds one :class:`HeadWeights` per block, in the same
    order. With ``QuerySource.ROW``, ``dh(i, j)`` takes queries from channel
    ``i`` and keys/values from ``j``; ``COLUMN`` swaps the roles.

    Raises:
        DimensionError: The three signals differ in shape.
        ParameterError: ``weights`` does not hold six blocks.
    """
    signals = (r, g, b)
    if not (r.shape == g.shape == b.shape):
        raise DimensionError("build_dhead_rgb", r.shape, g.shape, b.shape)
    if len(weights) != len(RGB_PAIRS):
        msg = (
            f"build_dhead_rgb needs {len(RGB_PAIRS)} weight blocks, "
            f"got {len(weights)}"
        )
        raise ParameterError(msg)
    out = []
    for (i, j), w in zip(RGB_PAIRS, weights, strict=True):
        qi, kj = (i, j) if query_source is QuerySource.ROW else (j, i)
        tag = f"dh_{CHANNELS[i]}{CHANNELS[j]}"
        out.append(
            multi_head_attention(
                signals[qi], signals[kj], signals[kj], w, hook=hook, tag=tag
            )
        )
    return out


def mal_rgb(dheads: Sequence[Tensor]) -> Tensor:
    """Concatenate the six channel-pair blocks along the feature axis.

    Raises:
        InputError: Not exactly six blocks.
    """
    if len(dheads) != len(RGB_PAIRS):
        msg = (
            f"mal_rgb needs exactly {len(RGB_PAIRS)} attention blocks, "
            f"got {len(dheads)}"
        )
        raise InputError(msg)
    return concat(list(dheads), axis=-1)


def mal_mhl(
    signal: Tensor,
    weights: HeadWeights,
    hook: InspectionHook | None = None,
) -> Tensor:
    """Self-attention over the whole-image signal.

    The one-element concat is the identity.
    """
    return multi_head_attention(signal, signal, signal, weights, hook=hook, tag="mhl")


__all__ = [
    "CHANNELS",
    "RGB_PAIRS",
    "HeadWeights",
    "InspectionHook",
    "build_dhead_rgb",
    "init_head_weights",
    "isolate_channels",
    "mal_mhl",
    "mal_rgb",
    "multi_head_attention",
    "scaled_dot_attention",
]
