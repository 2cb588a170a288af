"""Helper utilities for seeding, hashing and file output."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np

from .exceptions import DataIOError
from .types import PathLikeStr


def derive_seed(seed: int, *parts: object) -> int:
    """Derive a 64-bit child seed from a global seed and identifying parts.

    The derivation is a keyed hash, so it is stable across processes and
    Python versions (unlike ``hash``).
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "little")


def derive_rng(seed: int, *parts: object) -> np.random.Generator:
    """Create an independent generator for ``(seed, *parts)``."""
    return np.random.default_rng(derive_seed(seed, *parts))


def ensure_dir(path: PathLikeStr) -> Path:
    """Create ``path`` (and parents) if needed and return it."""
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        msg = f"Cannot create directory {p}: {e}"
        raise DataIOError(msg) from e
    return p


def to_json_text(obj: Any) -> str:
    """Serialise ``obj`` deterministically (sorted keys, fixed separators)."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: PathLikeStr, obj: Any) -> Path:
    """Write ``obj`` as deterministic JSON."""
    p = Path(path)
    try:
        p.write_text(to_json_text(obj), encoding="utf-8")
    except OSError as e:
        msg = f"Cannot write {p}: {e}"
        raise DataIOError(msg) from e
    return p


def read_json(path: PathLikeStr) -> Any:
    """Read JSON from ``path``, mapping failures to :class:`DataIOError`."""
    p = Path(path)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        msg = f"Cannot read JSON from {p}: {e}"
        raise DataIOError(msg) from e


def file_sha256(path: PathLikeStr) -> str:
    """Hex SHA-256 digest of a file's bytes."""
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as e:
        msg = f"Cannot hash {path}: {e}"
        raise DataIOError(msg) from e
