"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a row-major numpy buffer (32-bit by default). Every
operation in :mod:`cellattn.core.ops` returns a new tensor linked to its
inputs through a :class:`GraphNode`; :func:`backward` and :func:`grad` walk
that graph once in reverse topological order.

Graphs are single-use: a backward pass releases the saved forward context of
every node it visits, and a second pass over the same graph raises
:class:`~cellattn.utils.UsageError`. Run the forward computation again
instead.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any

import numpy as np

from cellattn.utils import DimensionError, UsageError


if TYPE_CHECKING:
    import numpy.typing as npt


_logger = logging.getLogger("cellattn.core")

_ALLOWED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class OpKind(str, Enum):
    """Operation tags recorded on graph nodes."""

    ADD = "add"
    MUL = "mul"
    SCALE = "scale"
    MATMUL = "matmul"
    TRANSPOSE = "transpose"
    RESHAPE = "reshape"
    CONCAT = "concat"
    SLICE = "slice"
    SUM = "sum"
    MEAN = "mean"
    RELU = "relu"
    SOFTMAX = "softmax"
    CONV2D = "conv2d"
    AVG_POOL2D = "avg_pool2d"
    MAX_POOL2D = "max_pool2d"
    BATCHNORM = "batchnorm"
    DROPOUT = "dropout"
    DENSE = "dense"
    BCE_LOSS = "bce_loss"


BackwardFn = Callable[
    [np.ndarray, dict[str, Any], tuple[bool, ...]],
    Sequence["np.ndarray | None"],
]


@dataclass(eq=False)
class GraphNode:
    """Link from a computed tensor back to the tensors it was built from.

    ``backward_fn`` receives the upstream gradient, ``saved_context`` and a
    tuple saying which parents need a gradient; it returns one gradient (or
    ``None``) per parent.
    """

    op_kind: OpKind
    parents: tuple[Tensor, ...]
    backward_fn: BackwardFn
    saved_context: dict[str, Any] = field(default_factory=dict)
    consumed: bool = False

    def release(self) -> None:
        self.saved_context.clear()
        self.consumed = True


class Tensor:
    """n-dimensional float array with an optional gradient buffer."""

    __slots__ = ("_node", "_retain", "data", "grad", "name", "requires_grad")

    def __init__(
        self,
        data: npt.ArrayLike,
        requires_grad: bool = False,
        dtype: npt.DTypeLike = None,
        name: str | None = None,
    ) -> None:
        """Create a leaf tensor.

        Args:
            data: Array-like values; copied into a new buffer.
            requires_grad: Whether :func:`backward` accumulates into ``grad``.
            dtype: ``float32`` (default) or ``float64``.
            name: Optional label used in error messages and checkpoints.
        """
        target = np.dtype(np.float32) if dtype is None else np.dtype(dtype)
        if target not in _ALLOWED_DTYPES:
            msg = f"Tensor dtype must be float32 or float64, got {target}"
            raise TypeError(msg)
        arr = np.array(data, dtype=target, order="C", copy=True)
        if arr.ndim > 0 and 0 in arr.shape:
            raise DimensionError("tensor", arr.shape, detail="empty dimension")
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._node: GraphNode | None = None
        self._retain = False

    @classmethod
    def _from_op(
        cls,
        data: np.ndarray,
        op_kind: OpKind,
        parents: Sequence[Tensor],
        backward_fn: BackwardFn,
        **saved_context: Any,
    ) -> Tensor:
        out = cls.__new__(cls)
        out.data = np.ascontiguousarray(data)
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out.name = None
        out._node = GraphNode(op_kind, tuple(parents), backward_fn, saved_context)
        out._retain = False
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.data.dtype

    @property
    def node(self) -> GraphNode | None:
        return self._node

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        """Return the underlying buffer (do not mutate)."""
        return self.data

    def item(self) -> float:
        if self.size != 1:
            msg = f"item() needs a single-element tensor, got shape {self.shape}"
            raise UsageError(msg)
        return float(self.data.reshape(()))

    def retain_grad(self) -> Tensor:
        """Keep the gradient of this (non-leaf) tensor after backward."""
        self._retain = True
        return self

    def detach(self) -> Tensor:
        """Copy of the values with no graph linkage and no gradient."""
        return Tensor(self.data, dtype=self.dtype, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: Tensor | float) -> Tensor:
        from . import ops

        return ops.add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other: float) -> Tensor:
        return self.__add__(other)

    def __sub__(self, other: Tensor | float) -> Tensor:
        from . import ops

        return ops.add(self, ops.scale(_as_tensor(other, self.dtype), -1.0))

    def __neg__(self) -> Tensor:
        from . import ops

        return ops.scale(self, -1.0)

    def __mul__(self, other: Tensor | float) -> Tensor:
        from . import ops

        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    def __rmul__(self, other: float) -> Tensor:
        return self.__mul__(other)

    def __matmul__(self, other: Tensor) -> Tensor:
        from . import ops

        return ops.matmul(self, other)

    def __repr__(self) -> str:
        op = self._node.op_kind.value if self._node else "leaf"
        return (
            f"Tensor(shape={self.shape}, dtype={self.dtype}, op={op}, "
            f"requires_grad={self.requires_grad})"
        )


def _as_tensor(value: Tensor | float, dtype: np.dtype[Any]) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value), dtype=dtype)


def _topological_order(root: Tensor) -> list[Tensor]:
    """Tensors reachable from ``root``, parents before children."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in seen:
            continue
        seen.add(id(tensor))
        node = tensor._node  # noqa: SLF001
        if node is not None and node.consumed:
            msg = (
                "Graph already released by an earlier backward pass; "
                "run the forward computation again"
            )
            raise UsageError(msg)
        stack.append((tensor, True))
        if node is not None:
            stack.extend(
                (parent, False) for parent in node.parents if id(parent) not in seen
            )
    return order


def _propagate(
    root: Tensor,
    seed: np.ndarray,
    wanted: Callable[[Tensor], bool],
) -> dict[int, np.ndarray]:
    """Run the reverse sweep and return gradients keyed by ``id(tensor)``.

    Only tensors that are wanted, or that lie on a path from a wanted tensor to
    ``root``, receive gradients.
    """
    order = _topological_order(root)
    live: dict[int, bool] = {}
    for tensor in order:
        node = tensor._node  # noqa: SLF001
        parents_live = node is not None and any(live[id(p)] for p in node.parents)
        live[id(tensor)] = wanted(tensor) or parents_live

    grads: dict[int, np.ndarray] = {id(root): seed}
    visited = 0
    for tensor in reversed(order):
        g = grads.get(id(tensor))
        node = tensor._node  # noqa: SLF001
        if tensor._retain and g is not None:  # noqa: SLF001
            tensor.grad = g.astype(tensor.dtype, copy=True)
        if node is None or g is None:
            continue
        needs = tuple(live[id(p)] for p in node.parents)
        if any(needs):
            parent_grads = node.backward_fn(g, node.saved_context, needs)
            for parent, pg, need in zip(node.parents, parent_grads, needs, strict=True):
                if pg is None or not need:
                    continue
                pg = np.asarray(pg, dtype=parent.dtype)
                if pg.shape != parent.shape:
                    msg = f"{node.op_kind.value} backward produced a wrong shape"
                    raise DimensionError(msg, pg.shape, parent.shape)
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg
        visited += 1

    for tensor in order:
        if tensor._node is not None:  # noqa: SLF001
            tensor._node.release()  # noqa: SLF001
    _logger.debug("Backward visited %d nodes of %d tensors", visited, len(order))
    return grads


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``grad`` of every leaf requiring grad.

    Raises:
        UsageError: If ``loss`` is not a scalar or its graph was already used.
    """
    if loss.size != 1:
        msg = f"backward() needs a scalar loss, got shape {loss.shape}"
        raise UsageError(msg)
    if loss.is_leaf:
        if loss.requires_grad:
            one = np.ones_like(loss.data)
            loss.grad = one if loss.grad is None else loss.grad + one
        return

    order_lookup: dict[int, Tensor] = {}

    def wanted(t: Tensor) -> bool:
        if t.is_leaf and t.requires_grad:
            order_lookup[id(t)] = t
            return True
        return False

    grads = _propagate(loss, np.ones_like(loss.data), wanted)
    for key, leaf in order_lookup.items():
        g = grads.get(key)
        if g is None:
            continue
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g


def grad(output: Tensor, inputs: Iterable[Tensor]) -> list[np.ndarray]:
    """Return d(output)/d(input) for each input without touching ``.grad``.

    ``inputs`` may be intermediate tensors (e.g. convolution activations); the
    parameters' gradient buffers are left untouched, so this is safe to call on
    shared, frozen parameters from several threads.
    """
    if output.size != 1:
        msg = f"grad() needs a scalar output, got shape {output.shape}"
        raise UsageError(msg)
    targets = list(inputs)
    target_ids = {id(t) for t in targets}
    grads = _propagate(output, np.ones_like(output.data), lambda t: id(t) in target_ids)
    return [
        grads.get(id(t), np.zeros_like(t.data)).astype(t.dtype, copy=True)
        for t in targets
    ]


__all__ = [
    "BackwardFn",
    "GraphNode",
    "OpKind",
    "Tensor",
    "backward",
    "grad",
]
