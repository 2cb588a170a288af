"""Run configuration: ``key=value`` files, overrides and resolved snapshots.

A config file holds one ``key=value`` pair per line. ``#`` starts a comment
and blank lines are ignored. Model keys are flat (``family``, ``heads``) or
dotted for the backbone (``backbone.kind``); training keys are flat
(``epochs``, ``lr``); generator keys live under ``synthetic.``. ``image_side``
sets the model input size and, unless ``synthetic.image_side`` is given, the
size of generated images.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from cellattn.data import SyntheticConfig
from cellattn.evaluation import TrainConfig
from cellattn.models import BackboneConfig, EncoderConfig
from cellattn.utils import (
    ConfigurationError,
    DataIOError,
    PathLikeStr,
    ensure_dir,
    to_json_text,
)


_logger = logging.getLogger("cellattn.config")

SNAPSHOT_NAME = "resolved_config.json"


def _to_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    msg = f"expected a boolean, got {value!r}"
    raise ValueError(msg)


def _to_ints(value: str) -> tuple[int, ...]:
    return tuple(int(v) for v in value.replace(" ", "").split(",") if v)


def _optional_int(value: str) -> int | None:
    return None if value.strip().lower() in ("", "none", "auto") else int(value)


Converter = Callable[[str], Any]

ENCODER_KEYS: dict[str, Converter] = {
    "family": str,
    "heads": int,
    "d_model": int,
    "d_k": _optional_int,
    "d_v": _optional_int,
    "mlp_dims": _to_ints,
    "mlp_dropout": float,
    "query_source": str,
}

BACKBONE_KEYS: dict[str, Converter] = {
    "backbone.kind": str,
    "backbone.blocks": int,
    "backbone.base_filters": int,
    "backbone.growth": int,
    "backbone.layers_per_block": int,
    "backbone.downsample_stages": int,
}

TRAIN_KEYS: dict[str, Converter] = {
    "epochs": int,
    "lr": float,
    "batch_size": int,
    "augment_factor": int,
    "augment_kinds": str,
    "shuffle": _to_bool,
}

SYNTHETIC_KEYS: dict[str, Converter] = {
    "synthetic.n_normal": int,
    "synthetic.n_meta": int,
    "synthetic.image_side": int,
    "synthetic.curve_count_normal": _to_ints,
    "synthetic.curve_count_meta": _to_ints,
    "synthetic.nucleus_intensity": float,
    "synthetic.actin_intensity": float,
    "synthetic.vimentin_intensity": float,
    "synthetic.vimentin_spread_normal": float,
    "synthetic.vimentin_spread_meta": float,
    "synthetic.vimentin_points": int,
    "synthetic.noise_sigma": float,
}

GLOBAL_KEYS: dict[str, Converter] = {
    "seed": int,
    "image_side": int,
    "folds": int,
}

KNOWN_KEYS: dict[str, Converter] = {
    **GLOBAL_KEYS,
    **ENCODER_KEYS,
    **BACKBONE_KEYS,
    **TRAIN_KEYS,
    **SYNTHETIC_KEYS,
}


def parse_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key=value`` lines; later keys win.

    Raises:
        ConfigurationError: A non-blank line has no ``=`` or an empty key.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            msg = f"{source}:{lineno}: expected 'key=value', got {raw.strip()!r}"
            raise ConfigurationError(msg)
        values[key] = value.strip()
    return values


def load_config_file(path: PathLikeStr) -> dict[str, str]:
    """Read and parse a config file.

    Raises:
        DataIOError: The file cannot be read.
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        msg = f"Cannot read config file {p}: {e}"
        raise DataIOError(msg) from e
    return parse_key_values(text, source=str(p))


def apply_overrides(
    values: Mapping[str, str], overrides: Iterable[str]
) -> dict[str, str]:
    """Return a copy of ``values`` with ``key=value`` overrides applied in order."""
    merged = dict(values)
    for i, item in enumerate(overrides, start=1):
        merged.update(parse_key_values(item, source=f"--set #{i}"))
    return merged


def check_keys(values: Mapping[str, str]) -> None:
    unknown = sorted(set(values) - set(KNOWN_KEYS))
    if unknown:
        msg = f"Unknown config keys: {', '.join(unknown)}"
        raise ConfigurationError(msg)


def _convert(
    values: Mapping[str, str], keys: Mapping[str, Converter]
) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, convert in keys.items():
        if key not in values:
            continue
        try:
            out[key.rsplit(".", 1)[-1]] = convert(values[key])
        except ValueError as e:
            msg = f"Invalid value for {key}: {values[key]!r} ({e})"
            raise ConfigurationError(msg) from e
    return out


def resolve_encoder_config(values: Mapping[str, str]) -> EncoderConfig:
    """Build an :class:`EncoderConfig` from parsed values."""
    check_keys(values)
    backbone = _convert(values, BACKBONE_KEYS)
    if "image_side" in values:
        backbone["image_side"] = _convert(values, {"image_side": int})["image_side"]
    kwargs = _convert(values, ENCODER_KEYS)
    return EncoderConfig(backbone=BackboneConfig(**backbone), **kwargs)


def resolve_train_config(values: Mapping[str, str]) -> TrainConfig:
    check_keys(values)
    kwargs = _convert(values, TRAIN_KEYS)
    if "seed" in values:
        kwargs["seed"] = _convert(values, {"seed": int})["seed"]
    return TrainConfig(**kwargs)


def resolve_synthetic_config(values: Mapping[str, str]) -> SyntheticConfig:
    check_keys(values)
    kwargs = _convert(values, SYNTHETIC_KEYS)
    if "image_side" in values and "image_side" not in kwargs:
        kwargs["image_side"] = _convert(values, {"image_side": int})["image_side"]
    return SyntheticConfig(**kwargs)


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation: command, inputs and the merged ``key=value`` pairs."""

    command: str
    out_dir: Path
    seed: int = 0
    config_path: Path | None = None
    overrides: tuple[str, ...] = ()
    jobs: int = 1
    values: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.jobs < 1:
            msg = f"--jobs must be >= 1, got {self.jobs}"
            raise ConfigurationError(msg)
        check_keys(self.values)

    @classmethod
    def build(
        cls,
        command: str,
        out_dir: PathLikeStr,
        seed: int | None = None,
        config_path: PathLikeStr | None = None,
        overrides: Iterable[str] = (),
        jobs: int = 1,
        extra: Mapping[str, str] | None = None,
    ) -> RunConfig:
        """Merge file values, dedicated flags (``extra``) and ``--set`` overrides.

        An explicit ``seed`` beats the file; ``--set seed=...`` beats both.
        """
        merged = load_config_file(config_path) if config_path is not None else {}
        if seed is not None:
            merged["seed"] = str(seed)
        merged.setdefault("seed", "0")
        merged.update(extra or {})
        merged = apply_overrides(merged, overrides)
        return cls(
            command=command,
            out_dir=Path(out_dir),
            seed=_convert(merged, {"seed": int})["seed"],
            config_path=Path(config_path) if config_path is not None else None,
            overrides=tuple(overrides),
            jobs=jobs,
            values=merged,
        )

    def encoder(self) -> EncoderConfig:
        return resolve_encoder_config(self.values)

    def train(self) -> TrainConfig:
        return resolve_train_config(self.values)

    def synthetic(self) -> SyntheticConfig:
        return resolve_synthetic_config(self.values)

    def get_int(self, key: str, default: int) -> int:
        return _convert(self.values, {key: int}).get(key, default)


def snapshot(run: RunConfig, resolved: Mapping[str, Any]) -> str:
    """Stable JSON text recording the invocation and its resolved configs."""
    return to_json_text(
        {
            "command": run.command,
            "config_path": str(run.config_path) if run.config_path else None,
            "overrides": list(run.overrides),
            "seed": run.seed,
            "jobs": run.jobs,
            "values": dict(run.values),
            "resolved": dict(resolved),
        }
    )


def write_snapshot(run: RunConfig, resolved: Mapping[str, Any]) -> Path:
    target = ensure_dir(run.out_dir) / SNAPSHOT_NAME
    try:
        target.write_text(snapshot(run, resolved), encoding="utf-8")
    except OSError as e:
        msg = f"Cannot write {target}: {e}"
        raise DataIOError(msg) from e
    _logger.debug("Wrote %s", target)
    return target


__all__ = [
    "KNOWN_KEYS",
    "SNAPSHOT_NAME",
    "RunConfig",
    "apply_overrides",
    "check_keys",
    "load_config_file",
    "parse_key_values",
    "resolve_encoder_config",
    "resolve_synthetic_config",
    "resolve_train_config",
    "snapshot",
    "write_snapshot",
]
