"""Type aliases shared across cellattn."""

from __future__ import annotations

from collections.abc import Sequence
from os import PathLike
from typing import Any, TypeAlias

import numpy as np
import numpy.typing as npt


FloatArray: TypeAlias = npt.NDArray[np.floating[Any]]
IntArray: TypeAlias = npt.NDArray[np.integer[Any]]
Shape: TypeAlias = tuple[int, ...]
ShapeLike: TypeAlias = Sequence[int]
PathLikeStr: TypeAlias = str | PathLike[str]

# Class indices used throughout: 0 = normal, 1 = metastasizing.
CLASS_NAMES: tuple[str, str] = ("normal", "metastasizing")


def label_to_index(label: str | int) -> int:
    """Map a class name (or index) to its integer index."""
    if isinstance(label, int | np.integer):
        index = int(label)
        if index not in (0, 1):
            msg = f"Class index must be 0 or 1, got {index}"
            raise ValueError(msg)
        return index
    try:
        return CLASS_NAMES.index(label)
    except ValueError as e:
        msg = f"Unknown class label {label!r}; expected one of {CLASS_NAMES}"
        raise ValueError(msg) from e
