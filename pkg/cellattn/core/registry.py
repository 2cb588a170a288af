"""Named registries: model parameters and pluggable components."""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator
from dataclasses import dataclass
from typing import Any, Generic, TypeVar

import numpy as np
from typing_extensions import Self

from cellattn.utils import AlreadyRegisteredError, ConfigurationError

from .ops import RunningStats
from .tensor import Tensor


_logger = logging.getLogger("cellattn.core")

T = TypeVar("T")


class ParameterSet:
    """Ordered registry of trainable tensors and batchnorm running statistics.

    Names are dotted paths (``backbone.r.conv1.kernel``). Iterating yields the
    trainable tensors in registration order, which is also checkpoint order.
    """

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, RunningStats] = {}

    def bind(self, name: str, tensor: Tensor, allow_override: bool = False) -> Tensor:
        """Register a trainable tensor under ``name`` and return it."""
        if not allow_override and name in self._params:
            raise AlreadyRegisteredError(name)
        tensor.name = name
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def bind_buffer(
        self, name: str, stats: RunningStats, allow_override: bool = False
    ) -> RunningStats:
        if not allow_override and name in self._buffers:
            raise AlreadyRegisteredError(name)
        self._buffers[name] = stats
        return stats

    def get(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            msg = f"No parameter named {name!r}"
            raise ConfigurationError(msg) from None

    def get_buffer(self, name: str) -> RunningStats:
        try:
            return self._buffers[name]
        except KeyError:
            msg = f"No running statistics named {name!r}"
            raise ConfigurationError(msg) from None

    def has(self, name: str) -> bool:
        return name in self._params

    def has_buffer(self, name: str) -> bool:
        return name in self._buffers

    def remove(self, name: str) -> bool:
        return self._params.pop(name, None) is not None

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def buffer_names(self) -> list[str]:
        return list(self._buffers)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def buffers(self) -> Iterator[tuple[str, RunningStats]]:
        return iter(self._buffers.items())

    def count(self, prefix: str = "") -> int:
        """Total number of scalar parameters whose name starts with ``prefix``."""
        return sum(t.size for n, t in self._params.items() if n.startswith(prefix))

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def copy(self) -> ParameterSet:
        """Deep copy of values and running statistics (no gradients)."""
        return self.astype(None)

    def astype(self, dtype: Any) -> ParameterSet:
        """Deep copy with every tensor cast to ``dtype`` (``None`` keeps it)."""
        out = ParameterSet()
        for name, t in self._params.items():
            out.bind(name, Tensor(t.data, dtype=dtype or t.dtype))
        for name, stats in self._buffers.items():
            out.bind_buffer(
                name,
                RunningStats(stats.mean.copy(), stats.var.copy(), stats.momentum),
            )
        return out

    def state(self) -> dict[str, np.ndarray]:
        """Flat mapping of every array (parameters and running statistics)."""
        state = {n: t.data for n, t in self._params.items()}
        for n, stats in self._buffers.items():
            state[f"{n}.running_mean"] = stats.mean
            state[f"{n}.running_var"] = stats.var
        return state

    def equals(self, other: ParameterSet) -> bool:
        """Bit-exact comparison of names and values."""
        mine, theirs = self.state(), other.state()
        return mine.keys() == theirs.keys() and all(
            np.array_equal(mine[k], theirs[k]) for k in mine
        )

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self._params.values())

    def __contains__(self, name: str) -> bool:
        return name in self._params or name in self._buffers

    def __len__(self) -> int:
        return len(self._params)

    def __repr__(self) -> str:
        return (
            f"ParameterSet(params={len(self._params)}, "
            f"scalars={self.count()}, buffers={len(self._buffers)})"
        )


@dataclass(frozen=True)
class Registration(Generic[T]):
    """One named entry in a :class:`Registry`."""

    name: str
    value: T
    description: str = ""


class Registry(Generic[T]):
    """String-keyed registry for pluggable components (backbone kinds...)."""

    def __init__(self, label: str) -> None:
        self._label = label
        self._entries: dict[str, Registration[T]] = {}

    def bind(
        self,
        name: str,
        value: T,
        description: str = "",
        allow_override: bool = False,
    ) -> Self:
        if not allow_override and name in self._entries:
            _logger.debug("%s already has %r, override not allowed", self._label, name)
            raise AlreadyRegisteredError(name)
        self._entries[name] = Registration(name, value, description)
        _logger.debug("Registered %s %r", self._label, name)
        return self

    def register(
        self, name: str, description: str = ""
    ) -> Callable[[T], T]:
        """Decorator form of :meth:`bind`."""

        def decorator(value: T) -> T:
            self.bind(name, value, description)
            return value

        return decorator

    def get(self, name: str) -> T:
        entry = self._entries.get(name)
        if entry is None:
            known = ", ".join(sorted(self._entries)) or "none"
            msg = f"Unknown {self._label} {name!r} (known: {known})"
            raise ConfigurationError(msg)
        return entry.value

    def has(self, name: str) -> bool:
        return name in self._entries

    def remove(self, name: str) -> bool:
        return self._entries.pop(name, None) is not None

    def names(self) -> list[str]:
        return list(self._entries)

    def __contains__(self, name: str) -> bool:
        return self.has(name)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        return f"Registry({self._label!r}, entries={len(self._entries)})"


__all__ = [
    "ParameterSet",
    "Registration",
    "Registry",
]
