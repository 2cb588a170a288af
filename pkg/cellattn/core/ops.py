"""Differentiable tensor operations.

Functional layer primitives in the style of ``torch.nn.functional``: each
function validates shapes, computes the forward value (accumulating
reductions in 64-bit) and records a backward rule on the result.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from cellattn.utils import DimensionError, ParameterError, UsageError

from .tensor import OpKind, Tensor


def _result_dtype(*tensors: Tensor) -> np.dtype[Any]:
    return np.result_type(*(t.dtype for t in tensors))


def _f64(t: Tensor) -> np.ndarray:
    return t.data.astype(np.float64, copy=False)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (the inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_axis(axis: int, ndim: int, op: str) -> int:
    if not -ndim <= axis < ndim:
        msg = f"{op}: axis {axis} out of range for {ndim}-d tensor"
        raise ParameterError(msg)
    return axis % ndim


# ---------------------------------------------------------------------------
# Elementwise and structural ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with numpy broadcasting."""
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise DimensionError("add", a.shape, b.shape) from e
    out = (a.data + b.data).astype(_result_dtype(a, b), copy=False)

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]
    ) -> list[np.ndarray | None]:
        return [
            _unbroadcast(g, ctx["a_shape"]) if needs[0] else None,
            _unbroadcast(g, ctx["b_shape"]) if needs[1] else None,
        ]

    return Tensor._from_op(  # noqa: SLF001
        out, OpKind.ADD, (a, b), backward_fn, a_shape=a.shape, b_shape=b.shape
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise DimensionError("mul", a.shape, b.shape) from e
    out = (a.data * b.data).astype(_result_dtype(a, b), copy=False)

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]
    ) -> list[np.ndarray | None]:
        a_data, b_data = ctx["a"], ctx["b"]
        return [
            _unbroadcast(g * b_data, a_data.shape) if needs[0] else None,
            _unbroadcast(g * a_data, b_data.shape) if needs[1] else None,
        ]

    return Tensor._from_op(  # noqa: SLF001
        out, OpKind.MUL, (a, b), backward_fn, a=a.data, b=b.data
    )


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a constant."""
    out = (a.data * factor).astype(a.dtype, copy=False)

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]  # noqa: ARG001
    ) -> list[np.ndarray | None]:
        return [g * ctx["factor"]]

    return Tensor._from_op(  # noqa: SLF001
        out, OpKind.SCALE, (a,), backward_fn, factor=factor
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes (``numpy.matmul``)."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError as e:
        raise DimensionError("matmul", a.shape, b.shape) from e
    a64, b64 = _f64(a), _f64(b)
    out = np.matmul(a64, b64).astype(_result_dtype(a, b))

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]
    ) -> list[np.ndarray | None]:
        x, y = ctx["a"], ctx["b"]
        g64 = g.astype(np.float64, copy=False)
        ga = gb = None
        if needs[0]:
            ga = _unbroadcast(np.matmul(g64, np.swapaxes(y, -1, -2)), x.shape)
        if needs[1]:
            gb = _unbroadcast(np.matmul(np.swapaxes(x, -1, -2), g64), y.shape)
        return [ga, gb]

    return Tensor._from_op(  # noqa: SLF001
        out, OpKind.MATMUL, (a, b), backward_fn, a=a64, b=b64
    )


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.ndim < 2:
        raise DimensionError("transpose", a.shape, detail="needs at least 2 axes")
    out = np.swapaxes(a.data, -1, -2)

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]  # noqa: ARG001
    ) -> list[np.ndarray | None]:
        return [np.swapaxes(g, -1, -2)]

    return Tensor._from_op(out, OpKind.TRANSPOSE, (a,), backward_fn)  # noqa: SLF001


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as e:
        raise DimensionError("reshape", a.shape, tuple(shape)) from e

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]  # noqa: ARG001
    ) -> list[np.ndarray | None]:
        return [g.reshape(ctx["shape"])]

    return Tensor._from_op(  # noqa: SLF001
        out, OpKind.RESHAPE, (a,), backward_fn, shape=a.shape
    )


def flatten(a: Tensor) -> Tensor:
    """Collapse every axis after the first: ``(N, ...) -> (N, F)``."""
    if a.ndim < 1:
        raise DimensionError("flatten", a.shape, detail="needs a batch axis")
    return reshape(a, (a.shape[0], -1))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along ``axis``; all other dimensions must agree."""
    if not tensors:
        msg = "concat needs at least one tensor"
        raise ParameterError(msg)
    ndim = tensors[0].ndim
    ax = _check_axis(axis, ndim, "concat")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            d1 != d2 for i, (d1, d2) in enumerate(zip(ref, t.shape)) if i != ax
        ):
            raise DimensionError("concat", ref, t.shape, detail=f"axis={axis}")
    sizes = [t.shape[ax] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=ax).astype(
        _result_dtype(*tensors), copy=False
    )

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]
    ) -> list[np.ndarray | None]:
        bounds = np.cumsum(ctx["sizes"])[:-1]
        parts = np.split(g, bounds, axis=ctx["axis"])
        return [p if need else None for p, need in zip(parts, needs, strict=True)]

    return Tensor._from_op(  # noqa: SLF001
        out, OpKind.CONCAT, tuple(tensors), backward_fn, sizes=sizes, axis=ax
    )


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Take ``a[..., start:stop, ...]`` along ``axis`` (a contiguous copy)."""
    ax = _check_axis(axis, a.ndim, "slice_axis")
    if not 0 <= start < stop <= a.shape[ax]:
        msg = f"slice_axis: invalid range [{start}, {stop}) for size {a.shape[ax]}"
        raise ParameterError(msg)
    index: list[slice] = [slice(None)] * a.ndim
    index[ax] = slice(start, stop)
    out = a.data[tuple(index)].copy()

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]  # noqa: ARG001
    ) -> list[np.ndarray | None]:
        full = np.zeros(ctx["shape"], dtype=g.dtype)
        full[ctx["index"]] = g
        return [full]

    return Tensor._from_op(  # noqa: SLF001
        out, OpKind.SLICE, (a,), backward_fn, shape=a.shape, index=tuple(index)
    )


def sum_all(a: Tensor) -> Tensor:
    """Sum of every element, as a scalar tensor."""
    out = np.asarray(_f64(a).sum(), dtype=a.dtype)

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]  # noqa: ARG001
    ) -> list[np.ndarray | None]:
        return [np.broadcast_to(g, ctx["shape"]).copy()]

    return Tensor._from_op(  # noqa: SLF001
        out, OpKind.SUM, (a,), backward_fn, shape=a.shape
    )


def mean_all(a: Tensor) -> Tensor:
    """Mean of every element, as a scalar tensor."""
    out = np.asarray(_f64(a).mean(), dtype=a.dtype)

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]  # noqa: ARG001
    ) -> list[np.ndarray | None]:
        shape = ctx["shape"]
        return [np.broadcast_to(g / np.prod(shape), shape).copy()]

    return Tensor._from_op(  # noqa: SLF001
        out, OpKind.MEAN, (a,), backward_fn, shape=a.shape
    )


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = np.where(mask, a.data, 0).astype(a.dtype, copy=False)

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]  # noqa: ARG001
    ) -> list[np.ndarray | None]:
        return [g * ctx["mask"]]

    return Tensor._from_op(  # noqa: SLF001
        out, OpKind.RELU, (a,), backward_fn, mask=mask
    )


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax; every slice along ``axis`` sums to 1."""
    ax = _check_axis(axis, a.ndim, "softmax")
    x = _f64(a)
    e = np.exp(x - x.max(axis=ax, keepdims=True))
    s = e / e.sum(axis=ax, keepdims=True)

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]  # noqa: ARG001
    ) -> list[np.ndarray | None]:
        sm, axis_ = ctx["s"], ctx["axis"]
        g64 = g.astype(np.float64, copy=False)
        return [sm * (g64 - (g64 * sm).sum(axis=axis_, keepdims=True))]

    return Tensor._from_op(  # noqa: SLF001
        s.astype(a.dtype), OpKind.SOFTMAX, (a,), backward_fn, s=s, axis=ax
    )


# ---------------------------------------------------------------------------
# Layer primitives
# ---------------------------------------------------------------------------


def conv2d(
    input: Tensor,  # noqa: A002
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-D cross-correlation of an NCHW input with an OIHW kernel.

    Output spatial size is ``(H + 2p - kh) // s + 1`` (same for width).

    Raises:
        DimensionError: Channel mismatch or an empty output.
        ParameterError: Non-positive stride or negative padding.
    """
    if input.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(
            "conv2d", input.shape, kernel.shape, detail="need NCHW/OIHW"
        )
    n, c, h, w = input.shape
    o, ci, kh, kw = kernel.shape
    if c != ci:
        raise DimensionError(
            "conv2d", input.shape, kernel.shape, detail="input channels != kernel I"
        )
    if stride < 1 or padding < 0:
        msg = f"conv2d: stride must be >= 1 and padding >= 0 (got {stride}, {padding})"
        raise ParameterError(msg)
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise DimensionError(
            "conv2d", input.shape, kernel.shape, detail="output would be empty"
        )
    if bias is not None and bias.shape != (o,):
        raise DimensionError("conv2d bias", bias.shape, (o,))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1

    x = _f64(input)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[
        :, :, ::stride, ::stride
    ][:, :, :ho, :wo]
    k64 = _f64(kernel)
    out = np.einsum("nchwij,ocij->nohw", windows, k64, optimize=True)
    parents: tuple[Tensor, ...] = (input, kernel)
    if bias is not None:
        out = out + _f64(bias)[None, :, None, None]
        parents = (input, kernel, bias)
    dtype = _result_dtype(*parents)

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]
    ) -> list[np.ndarray | None]:
        g64 = g.astype(np.float64, copy=False)
        win, k = ctx["windows"], ctx["kernel"]
        s, p = ctx["stride"], ctx["padding"]
        grads: list[np.ndarray | None] = [None, None]
        if needs[0]:
            _, _, hp, wp = ctx["padded_shape"]
            _, _, out_h, out_w = g64.shape
            dx = np.zeros(ctx["padded_shape"], dtype=np.float64)
            for i in range(k.shape[2]):
                for j in range(k.shape[3]):
                    contrib = np.einsum("nohw,oc->nchw", g64, k[:, :, i, j])
                    dx[
                        :,
                        :,
                        i : i + s * (out_h - 1) + 1 : s,
                        j : j + s * (out_w - 1) + 1 : s,
                    ] += contrib
            grads[0] = dx[:, :, p : hp - p, p : wp - p] if p else dx
        if needs[1]:
            grads[1] = np.einsum("nohw,nchwij->ocij", g64, win, optimize=True)
        if len(needs) == 3:
            grads.append(g64.sum(axis=(0, 2, 3)) if needs[2] else None)
        return grads

    return Tensor._from_op(  # noqa: SLF001
        out.astype(dtype),
        OpKind.CONV2D,
        parents,
        backward_fn,
        windows=windows,
        kernel=k64,
        stride=stride,
        padding=padding,
        padded_shape=x.shape,
    )


def _pool_view(
    input: Tensor,  # noqa: A002
    window: int,
    op: str,
) -> tuple[int, int, int, int]:
    if input.ndim != 4:
        raise DimensionError(op, input.shape, detail="needs NCHW")
    if window < 1:
        msg = f"{op}: window must be >= 1, got {window}"
        raise ParameterError(msg)
    n, c, h, w = input.shape
    if h % window or w % window:
        raise DimensionError(
            op, input.shape, detail=f"spatial dims not divisible by window {window}"
        )
    return n, c, h // window, w // window


def avg_pool2d(input: Tensor, window: int) -> Tensor:  # noqa: A002
    """Non-overlapping average pooling."""
    n, c, ho, wo = _pool_view(input, window, "avg_pool2d")
    blocks = _f64(input).reshape(n, c, ho, window, wo, window)
    out = blocks.mean(axis=(3, 5))

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]  # noqa: ARG001
    ) -> list[np.ndarray | None]:
        k = ctx["window"]
        up = np.repeat(np.repeat(g, k, axis=2), k, axis=3)
        return [up / (k * k)]

    return Tensor._from_op(  # noqa: SLF001
        out.astype(input.dtype), OpKind.AVG_POOL2D, (input,), backward_fn, window=window
    )


def max_pool2d(input: Tensor, window: int) -> Tensor:  # noqa: A002
    """Non-overlapping max pooling; gradients flow to the argmax only."""
    n, c, ho, wo = _pool_view(input, window, "max_pool2d")
    blocks = (
        input.data.reshape(n, c, ho, window, wo, window)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, ho, wo, window * window)
    )
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]  # noqa: ARG001
    ) -> list[np.ndarray | None]:
        k = ctx["window"]
        nn, cc, hh, ww = g.shape
        routed = np.zeros((nn, cc, hh, ww, k * k), dtype=g.dtype)
        np.put_along_axis(routed, ctx["arg"][..., None], g[..., None], axis=-1)
        return [
            routed.reshape(nn, cc, hh, ww, k, k)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(nn, cc, hh * k, ww * k)
        ]

    return Tensor._from_op(  # noqa: SLF001
        out, OpKind.MAX_POOL2D, (input,), backward_fn, arg=arg, window=window
    )


def dense(input: Tensor, weight: Tensor, bias: Tensor) -> Tensor:  # noqa: A002
    """Affine map ``input @ weight + bias`` for ``(N, D) x (D, M)``."""
    if input.ndim != 2 or weight.ndim != 2 or input.shape[1] != weight.shape[0]:
        raise DimensionError("dense", input.shape, weight.shape)
    if bias.shape != (weight.shape[1],):
        raise DimensionError("dense bias", bias.shape, (weight.shape[1],))
    x, w = _f64(input), _f64(weight)
    out = x @ w + _f64(bias)

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]
    ) -> list[np.ndarray | None]:
        g64 = g.astype(np.float64, copy=False)
        return [
            g64 @ ctx["w"].T if needs[0] else None,
            ctx["x"].T @ g64 if needs[1] else None,
            g64.sum(axis=0) if needs[2] else None,
        ]

    return Tensor._from_op(  # noqa: SLF001
        out.astype(_result_dtype(input, weight, bias)),
        OpKind.DENSE,
        (input, weight, bias),
        backward_fn,
        x=x,
        w=w,
    )


@dataclass
class RunningStats:
    """Batchnorm running averages, updated in training and used at inference."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.9

    @classmethod
    def zeros(cls, channels: int, momentum: float = 0.9) -> RunningStats:
        return cls(
            mean=np.zeros(channels, dtype=np.float64),
            var=np.ones(channels, dtype=np.float64),
            momentum=momentum,
        )


def batchnorm(
    input: Tensor,  # noqa: A002
    gamma: Tensor,
    beta: Tensor,
    eps: float = 1e-5,
    running: RunningStats | None = None,
    training: bool = True,
) -> Tensor:
    """Batch normalisation over the batch (and spatial) axes, per channel.

    In training, batch statistics normalise the input and ``running`` (when
    given) is updated as ``m * running + (1 - m) * batch``. At inference the
    running averages are used; inference without ``running`` is an error.
    """
    if input.ndim not in (2, 4):
        raise DimensionError("batchnorm", input.shape, detail="needs (N,C) or NCHW")
    channels = input.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError("batchnorm", input.shape, gamma.shape, beta.shape)
    if eps <= 0:
        msg = f"batchnorm eps must be positive, got {eps}"
        raise ParameterError(msg)
    axes = (0, 2, 3) if input.ndim == 4 else (0,)
    bshape = (1, channels, 1, 1) if input.ndim == 4 else (1, channels)
    x = _f64(input)
    if training:
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        if running is not None:
            m = running.momentum
            running.mean = m * running.mean + (1.0 - m) * mu
            running.var = m * running.var + (1.0 - m) * var
    else:
        if running is None:
            msg = "batchnorm at inference needs running statistics"
            raise UsageError(msg)
        mu, var = running.mean, running.var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu.reshape(bshape)) * inv_std.reshape(bshape)
    g_ = _f64(gamma).reshape(bshape)
    out = g_ * xhat + _f64(beta).reshape(bshape)

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]
    ) -> list[np.ndarray | None]:
        g64 = g.astype(np.float64, copy=False)
        xh, istd, gam = ctx["xhat"], ctx["inv_std"], ctx["gamma"]
        ax, bs = ctx["axes"], ctx["bshape"]
        dx = None
        if needs[0]:
            dxhat = g64 * gam
            if ctx["training"]:
                count = xh.size // xh.shape[1]
                dx = (
                    istd.reshape(bs)
                    / count
                    * (
                        count * dxhat
                        - dxhat.sum(axis=ax, keepdims=True)
                        - xh * (dxhat * xh).sum(axis=ax, keepdims=True)
                    )
                )
            else:
                dx = dxhat * istd.reshape(bs)
        return [
            dx,
            (g64 * xh).sum(axis=ax) if needs[1] else None,
            g64.sum(axis=ax) if needs[2] else None,
        ]

    return Tensor._from_op(  # noqa: SLF001
        out.astype(_result_dtype(input, gamma, beta)),
        OpKind.BATCHNORM,
        (input, gamma, beta),
        backward_fn,
        xhat=xhat,
        inv_std=inv_std,
        gamma=g_,
        axes=axes,
        bshape=bshape,
        training=training,
    )


def dropout(
    input: Tensor,  # noqa: A002
    rate: float,
    training: bool,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Inverted dropout: kept units are scaled by ``1 / (1 - rate)``.

    With ``training=False`` (or ``rate == 0``) the input tensor itself is
    returned.
    """
    if not 0.0 <= rate < 1.0:
        msg = f"dropout rate must be in [0, 1), got {rate}"
        raise ParameterError(msg)
    if not training or rate == 0.0:
        return input
    if rng is None:
        msg = "dropout in training mode needs an explicit random generator"
        raise UsageError(msg)
    mask = (rng.random(input.shape) >= rate).astype(input.dtype) / input.dtype.type(
        1.0 - rate
    )
    out = input.data * mask

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]  # noqa: ARG001
    ) -> list[np.ndarray | None]:
        return [g * ctx["mask"]]

    return Tensor._from_op(  # noqa: SLF001
        out, OpKind.DROPOUT, (input,), backward_fn, mask=mask
    )


__all__ = [
    "RunningStats",
    "add",
    "avg_pool2d",
    "batchnorm",
    "concat",
    "conv2d",
    "dense",
    "dropout",
    "flatten",
    "matmul",
    "max_pool2d",
    "mean_all",
    "mul",
    "relu",
    "reshape",
    "scale",
    "slice_axis",
    "softmax",
    "sum_all",
    "transpose",
]
