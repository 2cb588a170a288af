"""TNSR binary tensor format and checkpoint containers.

A TNSR record is::

    b"TNSR" | u32 rank | rank x u64 dims | little-endian f32 payload

A checkpoint is a file of concatenated TNSR records plus a JSON index written
next to it (``<checkpoint>.json``) that maps each tensor name to its byte
offset and carries free-form metadata (the resolved model config).
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Any

import numpy as np

from cellattn.utils import DataIOError, PathLikeStr, read_json, write_json

from .ops import RunningStats
from .registry import ParameterSet
from .tensor import Tensor


_logger = logging.getLogger("cellattn.core")

MAGIC = b"TNSR"
INDEX_FORMAT = "cellattn-checkpoint/1"
_HEADER = struct.Struct("<4sI")


def encode_tensor(array: np.ndarray | Tensor) -> bytes:
    """Serialise an array to a TNSR record (values cast to float32)."""
    data = array.data if isinstance(array, Tensor) else np.asarray(array)
    dims = data.shape
    header = _HEADER.pack(MAGIC, len(dims)) + struct.pack(f"<{len(dims)}Q", *dims)
    return header + np.ascontiguousarray(data, dtype="<f4").tobytes()


def decode_tensor(buffer: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one TNSR record at ``offset``; return ``(array, next_offset)``."""
    try:
        magic, rank = _HEADER.unpack_from(buffer, offset)
        if magic != MAGIC:
            msg = f"Bad TNSR magic {magic!r} at offset {offset}"
            raise DataIOError(msg)
        pos = offset + _HEADER.size
        dims = struct.unpack_from(f"<{rank}Q", buffer, pos)
        pos += 8 * rank
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        end = pos + 4 * count
        if end > len(buffer):
            msg = f"Truncated TNSR payload at offset {offset}"
            raise DataIOError(msg)
        values = np.frombuffer(buffer, dtype="<f4", count=count, offset=pos)
    except struct.error as e:
        msg = f"Corrupt TNSR header at offset {offset}: {e}"
        raise DataIOError(msg) from e
    return values.astype(np.float32).reshape(dims), end


def save_tensor(path: PathLikeStr, array: np.ndarray | Tensor) -> Path:
    p = Path(path)
    try:
        p.write_bytes(encode_tensor(array))
    except OSError as e:
        msg = f"Cannot write tensor to {p}: {e}"
        raise DataIOError(msg) from e
    return p


def load_tensor(path: PathLikeStr) -> np.ndarray:
    try:
        buffer = Path(path).read_bytes()
    except OSError as e:
        msg = f"Cannot read tensor from {path}: {e}"
        raise DataIOError(msg) from e
    array, _ = decode_tensor(buffer)
    return array


def index_path(path: PathLikeStr) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def save_checkpoint(
    params: ParameterSet,
    path: PathLikeStr,
    metadata: dict[str, Any] | None = None,
) -> Path:
    """Write parameters and running statistics as a TNSR checkpoint."""
    blob = bytearray()
    tensors: dict[str, int] = {}
    buffers: dict[str, dict[str, Any]] = {}
    for name, tensor in params.items():
        tensors[name] = len(blob)
        blob += encode_tensor(tensor)
    for name, stats in params.buffers():
        mean_at = len(blob)
        blob += encode_tensor(stats.mean)
        var_at = len(blob)
        blob += encode_tensor(stats.var)
        buffers[name] = {"mean": mean_at, "var": var_at, "momentum": stats.momentum}
    p = Path(path)
    try:
        p.write_bytes(bytes(blob))
    except OSError as e:
        msg = f"Cannot write checkpoint {p}: {e}"
        raise DataIOError(msg) from e
    write_json(
        index_path(p),
        {
            "format": INDEX_FORMAT,
            "tensors": tensors,
            "buffers": buffers,
            "metadata": metadata or {},
        },
    )
    _logger.info("Saved checkpoint %s (%d tensors)", p, len(tensors))
    return p


def load_checkpoint(path: PathLikeStr) -> tuple[ParameterSet, dict[str, Any]]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    p = Path(path)
    index = read_json(index_path(p))
    if index.get("format") != INDEX_FORMAT:
        msg = f"{index_path(p)} is not a cellattn checkpoint index"
        raise DataIOError(msg)
    try:
        blob = p.read_bytes()
    except OSError as e:
        msg = f"Cannot read checkpoint {p}: {e}"
        raise DataIOError(msg) from e
    params = ParameterSet()
    for name, offset in index["tensors"].items():
        array, _ = decode_tensor(blob, int(offset))
        params.bind(name, Tensor(array))
    for name, entry in index["buffers"].items():
        mean, _ = decode_tensor(blob, int(entry["mean"]))
        var, _ = decode_tensor(blob, int(entry["var"]))
        params.bind_buffer(
            name,
            RunningStats(
                mean.astype(np.float64),
                var.astype(np.float64),
                float(entry["momentum"]),
            ),
        )
    _logger.info("Loaded checkpoint %s (%d tensors)", p, len(params))
    return params, dict(index.get("metadata", {}))


__all__ = [
    "INDEX_FORMAT",
    "MAGIC",
    "decode_tensor",
    "encode_tensor",
    "index_path",
    "load_checkpoint",
    "load_tensor",
    "save_checkpoint",
    "save_tensor",
]
