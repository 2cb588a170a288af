"""Stochastic gradient descent."""

from __future__ import annotations

import logging
from collections.abc import Iterable

import numpy as np

from cellattn.utils import ParameterError, UsageError

from .tensor import Tensor


_logger = logging.getLogger("cellattn.core")


def sgd_step(params: Iterable[Tensor], lr: float) -> None:
    """Apply ``p <- p - lr * grad(p)`` to every parameter, then clear gradients.

    Raises:
        ParameterError: If ``lr`` is negative or not finite.
        UsageError: If a parameter has no gradient (backward was not run).
    """
    if not np.isfinite(lr) or lr < 0:
        msg = f"learning rate must be a finite non-negative number, got {lr}"
        raise ParameterError(msg)
    tensors = list(params)
    missing = [p.name or repr(p) for p in tensors if p.grad is None]
    if missing:
        msg = f"sgd_step: no gradient for {len(missing)} parameter(s): {missing[:3]}"
        raise UsageError(msg)
    for p in tensors:
        assert p.grad is not None
        p.data -= (lr * p.grad).astype(p.dtype, copy=False)
        p.grad = None
    _logger.debug("SGD step over %d parameters (lr=%g)", len(tensors), lr)


__all__ = ["sgd_step"]
