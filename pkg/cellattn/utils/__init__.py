"""Utilities package for cellattn."""

from .exceptions import (
    AlreadyRegisteredError,
    CellAttnError,
    ConfigurationError,
    DataIOError,
    DimensionError,
    InputError,
    LeakageError,
    NumericalError,
    ParameterError,
    UsageError,
)
from .helpers import (
    derive_rng,
    derive_seed,
    ensure_dir,
    file_sha256,
    read_json,
    to_json_text,
    write_json,
)
from .logging import configure_cli_logging, logger
from .types import (
    CLASS_NAMES,
    FloatArray,
    IntArray,
    PathLikeStr,
    Shape,
    ShapeLike,
    label_to_index,
)


__all__ = [
    "CLASS_NAMES",
    "AlreadyRegisteredError",
    "CellAttnError",
    "ConfigurationError",
    "DataIOError",
    "DimensionError",
    "FloatArray",
    "InputError",
    "IntArray",
    "LeakageError",
    "NumericalError",
    "ParameterError",
    "PathLikeStr",
    "Shape",
    "ShapeLike",
    "UsageError",
    "configure_cli_logging",
    "derive_rng",
    "derive_seed",
    "ensure_dir",
    "file_sha256",
    "label_to_index",
    "logger",
    "read_json",
    "to_json_text",
    "write_json",
]
