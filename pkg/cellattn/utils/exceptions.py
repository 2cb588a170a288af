"""Custom exceptions for the cellattn library.

Every exception carries an ``exit_code`` that the command-line interface maps
to its process status: 2 for configuration or usage problems, 3 for I/O
problems and 4 for numerical failures.
"""

from typing import Any


class CellAttnError(Exception):
    """Base exception for all cellattn errors."""

    exit_code: int = 2


class DimensionError(CellAttnError):
    """Raised when tensor shapes are incompatible for an operation."""

    def __init__(self, op: str, *shapes: Any, detail: str = "") -> None:
        self.op = op
        self.shapes = shapes
        shape_str = " vs ".join(str(tuple(s)) for s in shapes)
        suffix = f": {detail}" if detail else ""
        super().__init__(f"{op}: incompatible shapes {shape_str}{suffix}")


class ParameterError(CellAttnError):
    """Raised when a scalar argument (axis, rate, fold, kind...) is invalid."""


class InputError(CellAttnError):
    """Raised when input data violates an operation's preconditions."""


class ConfigurationError(CellAttnError):
    """Raised when a configuration is inconsistent or incomplete."""


class UsageError(CellAttnError):
    """Raised when an API is called in an unsupported way."""


class NumericalError(CellAttnError):
    """Raised when training produces a non-finite loss."""

    exit_code = 4

    def __init__(self, epoch: int, batch: int, value: float) -> None:
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(
            f"Non-finite loss {value!r} at epoch {epoch}, batch {batch}"
        )


class DataIOError(CellAttnError):
    """Raised when a file cannot be read, written or decoded."""

    exit_code = 3


class LeakageError(CellAttnError):
    """Raised when a test-fold image reaches a training set."""

    def __init__(self, test_fold: int, leaked: list[str]) -> None:
        self.test_fold = test_fold
        self.leaked = leaked
        preview = ", ".join(leaked[:5])
        super().__init__(
            f"{len(leaked)} training entries leak from test fold {test_fold}: "
            f"{preview}"
        )


class AlreadyRegisteredError(CellAttnError):
    """Raised when a name is registered twice without override."""

    def __init__(self, name: Any) -> None:
        self.name = name
        super().__init__(f"Name already registered: {name}")
