"""Model configuration dataclasses."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any

from cellattn.utils import ConfigurationError


class BackboneKind(str, Enum):
    """Miniature feature extractors."""

    PLAIN_CNN = "plain_cnn"
    RESIDUAL = "residual"
    DENSE_CONCAT = "dense_concat"


class Family(str, Enum):
    """Encoder families.

    ``RGB`` isolates the three channels, runs one backbone per channel and
    attends over the six upper-triangular channel pairs. ``MHL`` runs a single
    backbone on the full image followed by one self-attention block.
    """

    RGB = "rgb"
    MHL = "mhl"


class QuerySource(str, Enum):
    """Which channel of a cross-channel pair ``dh(i, j)`` supplies the queries."""

    ROW = "row"
    COLUMN = "column"


def _coerce_enum(enum_cls: type[Enum], value: Any, field_name: str) -> Any:
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(str(value).lower())
    except ValueError:
        known = ", ".join(m.value for m in enum_cls)  # type: ignore[attr-defined]
        msg = f"{field_name} must be one of {known}, got {value!r}"
        raise ConfigurationError(msg) from None


@dataclass(frozen=True)
class BackboneConfig:
    """Shape and depth of a miniature backbone.

    The backbone downsamples ``downsample_stages`` times by two, ends in a
    convolution with ``num_classes`` output channels and flattens the spatial
    positions into a ``(signal_len, num_classes)`` signal.
    """

    kind: BackboneKind = BackboneKind.DENSE_CONCAT
    input_channels: int = 3
    blocks: int = 3
    base_filters: int = 8
    growth: int = 4
    layers_per_block: int = 3
    downsample_stages: int = 2
    image_side: int = 64
    num_classes: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", _coerce_enum(BackboneKind, self.kind, "kind"))
        if self.input_channels not in (1, 3):
            msg = f"input_channels must be 1 or 3, got {self.input_channels}"
            raise ConfigurationError(msg)
        for name in ("blocks", "base_filters", "growth", "layers_per_block"):
            if getattr(self, name) < 1:
                msg = f"{name} must be positive, got {getattr(self, name)}"
                raise ConfigurationError(msg)
        if self.num_classes != 2:
            msg = f"num_classes must be 2, got {self.num_classes}"
            raise ConfigurationError(msg)
        if self.downsample_stages < 1:
            msg = "downsample_stages must be at least 1"
            raise ConfigurationError(msg)
        if self.kind is BackboneKind.PLAIN_CNN and self.downsample_stages > 2:
            msg = "plain_cnn has three conv layers; at most 2 stages may stride by 2"
            raise ConfigurationError(msg)
        too_many = self.downsample_stages > self.blocks
        if self.kind is not BackboneKind.PLAIN_CNN and too_many:
            msg = (
                f"{self.kind.value} downsamples once in the stem and once between "
                f"blocks, so downsample_stages ({self.downsample_stages}) must not "
                f"exceed blocks ({self.blocks})"
            )
            raise ConfigurationError(msg)
        factor = 2**self.downsample_stages
        if self.image_side < 8 or self.image_side % factor:
            msg = (
                f"image_side {self.image_side} must be >= 8 and divisible by "
                f"{factor} for {self.downsample_stages} stride-2 stages"
            )
            raise ConfigurationError(msg)

    @property
    def signal_side(self) -> int:
        return self.image_side // 2**self.downsample_stages

    @property
    def signal_len(self) -> int:
        """Number of rows L of the flattened ``(L, num_classes)`` signal."""
        return self.signal_side**2

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["kind"] = self.kind.value
        return data


@dataclass(frozen=True)
class EncoderConfig:
    """Complete description of a multi-attention classifier."""

    family: Family = Family.MHL
    heads: int = 2
    d_model: int = 2
    d_k: int | None = None
    d_v: int | None = None
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    mlp_dims: tuple[int, ...] = (1024, 512)
    mlp_dropout: float = 0.3
    num_classes: int = 2
    query_source: QuerySource = QuerySource.ROW

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", _coerce_enum(Family, self.family, "family"))
        object.__setattr__(
            self,
            "query_source",
            _coerce_enum(QuerySource, self.query_source, "query_source"),
        )
        object.__setattr__(self, "mlp_dims", tuple(int(d) for d in self.mlp_dims))
        channels = 1 if self.family is Family.RGB else 3
        if self.backbone.input_channels != channels:
            object.__setattr__(
                self, "backbone", replace(self.backbone, input_channels=channels)
            )
        if self.heads < 1:
            msg = f"heads must be >= 1, got {self.heads}"
            raise ConfigurationError(msg)
        if self.d_model != self.backbone.num_classes:
            msg = (
                f"d_model ({self.d_model}) must equal the backbone signal width "
                f"({self.backbone.num_classes})"
            )
            raise ConfigurationError(msg)
        if (self.d_k is None or self.d_v is None) and self.d_model % self.heads:
            msg = (
                f"d_model ({self.d_model}) is not divisible by heads ({self.heads}); "
                "set d_k and d_v explicitly"
            )
            raise ConfigurationError(msg)
        for name in ("d_k", "d_v"):
            value = getattr(self, name)
            if value is not None and value < 1:
                msg = f"{name} must be positive, got {value}"
                raise ConfigurationError(msg)
        if not self.mlp_dims or any(d < 1 for d in self.mlp_dims):
            msg = f"mlp_dims must be positive sizes, got {self.mlp_dims}"
            raise ConfigurationError(msg)
        if not 0.0 <= self.mlp_dropout < 1.0:
            msg = f"mlp_dropout must be in [0, 1), got {self.mlp_dropout}"
            raise ConfigurationError(msg)
        if self.num_classes != 2:
            msg = f"num_classes must be 2, got {self.num_classes}"
            raise ConfigurationError(msg)

    @property
    def key_dim(self) -> int:
        return self.d_k if self.d_k is not None else self.d_model // self.heads

    @property
    def value_dim(self) -> int:
        return self.d_v if self.d_v is not None else self.d_model // self.heads

    @property
    def attention_blocks(self) -> int:
        return 6 if self.family is Family.RGB else 1

    @property
    def image_side(self) -> int:
        return self.backbone.image_side

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (3, self.image_side, self.image_side)

    @property
    def feature_width(self) -> int:
        """Width of the flattened attention output fed to the MLP."""
        return self.backbone.signal_len * self.d_model * self.attention_blocks

    @property
    def name(self) -> str:
        """Short label such as ``MHL-dense_concat``."""
        return f"{self.family.value.upper()}-{self.backbone.kind.value}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family.value,
            "heads": self.heads,
            "d_model": self.d_model,
            "d_k": self.key_dim,
            "d_v": self.value_dim,
            "backbone": self.backbone.to_dict(),
            "mlp_dims": list(self.mlp_dims),
            "mlp_dropout": self.mlp_dropout,
            "num_classes": self.num_classes,
            "query_source": self.query_source.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EncoderConfig:
        backbone = BackboneConfig(**data.get("backbone", {}))
        kwargs = {k: v for k, v in data.items() if k != "backbone"}
        if "mlp_dims" in kwargs:
            kwargs["mlp_dims"] = tuple(kwargs["mlp_dims"])
        try:
            return cls(backbone=backbone, **kwargs)
        except TypeError as e:
            msg = f"Invalid encoder config: {e}"
            raise ConfigurationError(msg) from e


__all__ = [
    "BackboneConfig",
    "BackboneKind",
    "EncoderConfig",
    "Family",
    "QuerySource",
]
