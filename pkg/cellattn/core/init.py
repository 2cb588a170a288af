"""Parameter initialisation."""

from __future__ import annotations

import numpy as np

from cellattn.utils import ParameterError

from .tensor import Tensor


def fan_in_out(shape: tuple[int, ...]) -> tuple[int, int]:
    """Fan-in/fan-out for dense ``(D, M)`` and convolution ``(O, I, kh, kw)``."""
    if len(shape) == 2:
        return shape[0], shape[1]
    if len(shape) == 4:
        receptive = shape[2] * shape[3]
        return shape[1] * receptive, shape[0] * receptive
    msg = f"Cannot compute fan-in/fan-out for shape {shape}"
    raise ParameterError(msg)


def glorot_uniform(
    shape: tuple[int, ...],
    rng: np.random.Generator,
    name: str | None = None,
) -> Tensor:
    """Uniform in ``+-sqrt(6 / (fan_in + fan_out))``, requiring grad."""
    fan_in, fan_out = fan_in_out(shape)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(
        rng.uniform(-limit, limit, size=shape), requires_grad=True, name=name
    )


def zeros(shape: tuple[int, ...], name: str | None = None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def ones(shape: tuple[int, ...], name: str | None = None) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True, name=name)


__all__ = [
    "fan_in_out",
    "glorot_uniform",
    "ones",
    "zeros",
]
