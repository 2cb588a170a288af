"""Dataset manifests, stratified folds and leakage-free training sets."""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from cellattn.utils import (
    CLASS_NAMES,
    ConfigurationError,
    InputError,
    LeakageError,
    ParameterError,
    PathLikeStr,
    derive_rng,
    label_to_index,
    read_json,
    write_json,
)

from .io import load_image
from .transforms import (
    DEFAULT_AUGMENTS,
    AugmentKind,
    ZcaWhitener,
    augment,
    parse_augment_kind,
)


_logger = logging.getLogger("cellattn.data")

GENERATOR_VERSION = "cellattn-synthetic/1"
DEFAULT_FOLDS = 5


@dataclass(frozen=True)
class ManifestEntry:
    """One image of a dataset.

    Attributes:
        image_id: Unique identifier.
        path: File path, relative to the manifest's directory.
        label: ``normal`` or ``metastasizing``.
        fold: Cross-validation fold, ``None`` before assignment.
        augmented: Whether the image is an augmented variant.
        parent_id: Source image of an augmented variant.
    """

    image_id: str
    path: str
    label: str
    fold: int | None = None
    augmented: bool = False
    parent_id: str | None = None

    def __post_init__(self) -> None:
        if self.label not in CLASS_NAMES:
            msg = (
                f"Entry {self.image_id!r} has label {self.label!r}; "
                f"expected one of {CLASS_NAMES}"
            )
            raise InputError(msg)

    @property
    def label_index(self) -> int:
        return label_to_index(self.label)


@dataclass
class DatasetManifest:
    """Ordered image entries plus generator provenance."""

    entries: list[ManifestEntry]
    seed: int
    image_side: int
    generator_version: str = GENERATOR_VERSION
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        ids = Counter(e.image_id for e in self.entries)
        duplicates = sorted(i for i, n in ids.items() if n > 1)
        if duplicates:
            msg = f"Duplicate image ids in manifest: {duplicates[:5]}"
            raise InputError(msg)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def folds(self) -> list[int]:
        return sorted({e.fold for e in self.entries if e.fold is not None})

    def class_counts(self) -> dict[str, int]:
        counts = Counter(e.label for e in self.entries)
        return {name: counts.get(name, 0) for name in CLASS_NAMES}

    def fold_entries(self, fold: int) -> list[ManifestEntry]:
        return [e for e in self.entries if e.fold == fold]

    def labels(self, entries: Iterable[ManifestEntry] | None = None) -> np.ndarray:
        chosen = self.entries if entries is None else entries
        return np.array([e.label_index for e in chosen], dtype=np.int64)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def load(self, entry: ManifestEntry) -> np.ndarray:
        return load_image(self.resolve(entry))

    def load_images(self, entries: Sequence[ManifestEntry]) -> np.ndarray:
        return np.stack([self.load(e) for e in entries]) if entries else np.zeros((0,))

    def to_dict(self) -> dict[str, Any]:
        return {
            "header": {
                "seed": self.seed,
                "image_side": self.image_side,
                "generator_version": self.generator_version,
            },
            "entries": [asdict(e) for e in self.entries],
        }

    @classmethod
    def from_dict(
        cls, data: dict[str, Any], root: Path | None = None
    ) -> DatasetManifest:
        try:
            header = data["header"]
            entries = [ManifestEntry(**e) for e in data["entries"]]
            return cls(
                entries=entries,
                seed=int(header["seed"]),
                image_side=int(header["image_side"]),
                generator_version=str(
                    header.get("generator_version", GENERATOR_VERSION)
                ),
                root=root,
            )
        except (KeyError, TypeError) as e:
            msg = f"Malformed manifest: {e}"
            raise InputError(msg) from e

    def save(self, path: PathLikeStr) -> Path:
        return write_json(path, self.to_dict())

    @classmethod
    def load_file(cls, path: PathLikeStr) -> DatasetManifest:
        p = Path(path)
        return cls.from_dict(read_json(p), root=p.parent)


def stratified_kfold(
    manifest: DatasetManifest, k: int = DEFAULT_FOLDS, seed: int = 0
) -> DatasetManifest:
    """Assign fold ids by per-class shuffle then round-robin.

    The round-robin counter continues from one class to the next, so total
    fold sizes differ by at most one as well as per-class counts.

    Raises:
        ConfigurationError: ``k < 2`` or ``k`` exceeds the smallest class.
    """
    counts = manifest.class_counts()
    present = {name: n for name, n in counts.items() if n}
    if k < 2:
        msg = f"k-fold needs k >= 2, got {k}"
        raise ConfigurationError(msg)
    if not present or k > min(present.values()):
        msg = f"k={k} exceeds the smallest class count {present}"
        raise ConfigurationError(msg)
    folds: dict[str, int] = {}
    offset = 0
    for name in CLASS_NAMES:
        ids = [e.image_id for e in manifest.entries if e.label == name]
        order = derive_rng(seed, "kfold", name).permutation(len(ids))
        for rank, idx in enumerate(order):
            folds[ids[idx]] = (offset + rank) % k
        offset += len(ids)
    entries = [replace(e, fold=folds[e.image_id]) for e in manifest.entries]
    _logger.info("Assigned %d images to %d stratified folds", len(entries), k)
    return replace(manifest, entries=entries)


ImageSource = Callable[[ManifestEntry], np.ndarray]


@dataclass
class TrainingSet:
    """Images, labels and entries of one fold's training pool."""

    images: np.ndarray
    labels: np.ndarray
    entries: list[ManifestEntry]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def raw_count(self) -> int:
        return sum(not e.augmented for e in self.entries)

    @property
    def augmented_count(self) -> int:
        return sum(e.augmented for e in self.entries)


def audit_training_set(
    manifest: DatasetManifest,
    training_entries: Iterable[ManifestEntry],
    test_fold: int,
) -> None:
    """Raise :class:`LeakageError` if a test image or its variant is in training."""
    test_ids = {e.image_id for e in manifest.fold_entries(test_fold)}
    leaked = [
        e.image_id
        for e in training_entries
        if e.image_id in test_ids
        or (e.parent_id is not None and e.parent_id in test_ids)
    ]
    if leaked:
        raise LeakageError(test_fold, leaked)


def build_training_set(
    manifest: DatasetManifest,
    test_fold: int,
    augment_factor: int = 2,
    seed: int = 0,
    kinds: Sequence[AugmentKind | str] = DEFAULT_AUGMENTS,
    source: ImageSource | None = None,
) -> TrainingSet:
    """Raw images of every other fold plus ``augment_factor`` variants of each.

    Each variant draws its augmentation kind and parameters from a generator
    derived from ``(seed, test_fold, parent id, variant index)``. A ZCA
    whitener, when requested, is fitted on the raw training images only.

    Raises:
        ParameterError: ``test_fold`` is not a fold of the manifest, or
            ``augment_factor`` is negative.
        LeakageError: The assembled pool contains test-fold images.
    """
    if test_fold not in manifest.folds:
        msg = f"test_fold {test_fold} is not one of the manifest folds {manifest.folds}"
        raise ParameterError(msg)
    if augment_factor < 0:
        msg = f"augment_factor must be non-negative, got {augment_factor}"
        raise ParameterError(msg)
    chosen = [parse_augment_kind(k) for k in kinds]
    if augment_factor and not chosen:
        msg = "augment_factor > 0 needs at least one augmentation kind"
        raise ParameterError(msg)
    load = source or manifest.load

    raw_entries = [
        e
        for e in manifest.entries
        if e.fold is not None and e.fold != test_fold and not e.augmented
    ]
    raw_images = [load(e) for e in raw_entries]
    whitener = None
    if AugmentKind.ZCA in chosen and augment_factor:
        stack = np.stack(raw_images)
        whitener = ZcaWhitener(
            patch=ZcaWhitener.auto_patch(stack.shape[1], stack.shape[-1])
        ).fit(stack)

    entries = list(raw_entries)
    images = list(raw_images)
    for parent, image in zip(raw_entries, raw_images, strict=True):
        for j in range(augment_factor):
            rng = derive_rng(seed, "augment", test_fold, parent.image_id, j)
            kind = chosen[int(rng.integers(len(chosen)))]
            images.append(augment(image, kind, rng, whitener).astype(image.dtype))
            entries.append(
                ManifestEntry(
                    image_id=f"{parent.image_id}.aug{j}",
                    path="",
                    label=parent.label,
                    fold=parent.fold,
                    augmented=True,
                    parent_id=parent.image_id,
                )
            )
    audit_training_set(manifest, entries, test_fold)
    _logger.info(
        "Fold %d training pool: %d raw + %d augmented",
        test_fold,
        len(raw_entries),
        len(entries) - len(raw_entries),
    )
    return TrainingSet(
        images=np.stack(images) if images else np.zeros((0,)),
        labels=manifest.labels(entries),
        entries=entries,
    )


__all__ = [
    "DEFAULT_FOLDS",
    "GENERATOR_VERSION",
    "DatasetManifest",
    "ImageSource",
    "ManifestEntry",
    "TrainingSet",
    "audit_training_set",
    "build_training_set",
    "stratified_kfold",
]
