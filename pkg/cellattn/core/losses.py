"""Loss functions."""

from __future__ import annotations

from typing import Any

import numpy as np

from cellattn.utils import DimensionError, InputError

from .tensor import OpKind, Tensor


BCE_EPSILON = 1e-7


def bce_loss(
    probabilities: Tensor,
    labels: Tensor | np.ndarray,
    eps: float = BCE_EPSILON,
) -> Tensor:
    """Binary cross-entropy averaged over every element of an ``(N, 2)`` batch.

    Probabilities are clamped to ``[eps, 1 - eps]`` before the logarithm; the
    clamp passes no gradient where it is active.

    Args:
        probabilities: Predicted class probabilities, shape ``(N, 2)``.
        labels: One-hot targets of the same shape.
        eps: Clamp epsilon.

    Returns:
        Scalar loss tensor.

    Raises:
        DimensionError: Shapes differ or are not ``(N, 2)``.
        InputError: A label row is not one-hot.
    """
    y = labels.data if isinstance(labels, Tensor) else np.asarray(labels)
    if probabilities.ndim != 2 or probabilities.shape != y.shape:
        raise DimensionError("bce_loss", probabilities.shape, y.shape)
    y = y.astype(np.float64)
    one_hot = np.all((y == 0) | (y == 1), axis=1) & (y.sum(axis=1) == 1)
    if not np.all(one_hot):
        bad = np.flatnonzero(~one_hot).tolist()
        msg = f"bce_loss: label rows {bad[:5]} are not one-hot"
        raise InputError(msg)

    p = probabilities.data.astype(np.float64)
    pc = np.clip(p, eps, 1.0 - eps)
    value = -np.mean(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))

    def backward_fn(
        g: np.ndarray, ctx: dict[str, Any], needs: tuple[bool, ...]  # noqa: ARG001
    ) -> list[np.ndarray | None]:
        clamp, targets, raw = ctx["pc"], ctx["y"], ctx["p"]
        inside = (raw > ctx["eps"]) & (raw < 1.0 - ctx["eps"])
        dp = -(targets / clamp - (1.0 - targets) / (1.0 - clamp)) / targets.size
        return [float(g) * dp * inside]

    return Tensor._from_op(  # noqa: SLF001
        np.asarray(value, dtype=probabilities.dtype),
        OpKind.BCE_LOSS,
        (probabilities,),
        backward_fn,
        pc=pc,
        y=y,
        p=p,
        eps=eps,
    )


def one_hot(labels: np.ndarray, num_classes: int = 2) -> np.ndarray:
    """Integer class indices to a float one-hot matrix."""
    idx = np.asarray(labels, dtype=np.int64)
    if idx.ndim != 1 or np.any(idx < 0) or np.any(idx >= num_classes):
        msg = f"labels must be a 1-d array of indices below {num_classes}"
        raise InputError(msg)
    out = np.zeros((idx.size, num_classes), dtype=np.float32)
    out[np.arange(idx.size), idx] = 1.0
    return out


__all__ = [
    "BCE_EPSILON",
    "bce_loss",
    "one_hot",
]
