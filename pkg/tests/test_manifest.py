"""Tests for manifests, stratified folds and fold training pools."""

from collections import Counter

import numpy as np
import pytest

from cellattn.data import (
    DatasetManifest,
    ManifestEntry,
    audit_training_set,
    build_training_set,
    stratified_kfold,
)
from cellattn.utils import (
    ConfigurationError,
    InputError,
    LeakageError,
    ParameterError,
)


def make_manifest(n_normal=100, n_meta=120, side=8):
    entries = [
        ManifestEntry(f"normal_{i:03d}", f"images/normal_{i:03d}.png", "normal")
        for i in range(n_normal)
    ] + [
        ManifestEntry(
            f"metastasizing_{i:03d}",
            f"images/metastasizing_{i:03d}.png",
            "metastasizing",
        )
        for i in range(n_meta)
    ]
    return DatasetManifest(entries=entries, seed=0, image_side=side)


def fake_source(side=8):
    """Deterministic in-memory images keyed by image id."""

    def load(entry):
        rng = np.random.default_rng(sum(map(ord, entry.image_id)))
        return rng.random((3, side, side)).astype(np.float32)

    return load


class TestManifest:
    """Manifest bookkeeping."""

    def test_rejects_unknown_label(self):
        with pytest.raises(InputError):
            ManifestEntry("x", "x.png", "benign")

    def test_rejects_duplicate_ids(self):
        entry = ManifestEntry("x", "x.png", "normal")
        with pytest.raises(InputError):
            DatasetManifest(entries=[entry, entry], seed=0, image_side=8)

    def test_class_counts_and_labels(self):
        manifest = make_manifest(3, 2)
        assert manifest.class_counts() == {"normal": 3, "metastasizing": 2}
        np.testing.assert_array_equal(manifest.labels(), [0, 0, 0, 1, 1])

    def test_json_round_trip(self, tmp_path):
        manifest = stratified_kfold(make_manifest(10, 12), k=2)
        path = manifest.save(tmp_path / "manifest.json")
        loaded = DatasetManifest.load_file(path)
        assert loaded == manifest
        assert loaded.root == tmp_path

    def test_relative_paths_resolve_against_root(self, tmp_path):
        manifest = make_manifest(1, 1)
        manifest.root = tmp_path
        expected = tmp_path / "images" / "normal_000.png"
        assert manifest.resolve(manifest.entries[0]) == expected

    def test_malformed_manifest(self):
        with pytest.raises(InputError):
            DatasetManifest.from_dict({"entries": []})


class TestStratifiedKFold:
    """Fold assignment."""

    def setup_method(self):
        self.manifest = stratified_kfold(make_manifest(), k=5, seed=0)

    def test_fold_sizes(self):
        """100 normal and 120 metastasizing give five folds of 20 + 24."""
        assert self.manifest.folds == [0, 1, 2, 3, 4]
        for fold in self.manifest.folds:
            counts = Counter(e.label for e in self.manifest.fold_entries(fold))
            assert counts == {"normal": 20, "metastasizing": 24}

    def test_every_image_in_exactly_one_fold(self):
        assert all(e.fold is not None for e in self.manifest.entries)
        total = sum(len(self.manifest.fold_entries(f)) for f in self.manifest.folds)
        assert total == 220

    def test_uneven_classes_differ_by_at_most_one(self):
        manifest = stratified_kfold(make_manifest(7, 9), k=3)
        sizes = [len(manifest.fold_entries(f)) for f in manifest.folds]
        assert max(sizes) - min(sizes) <= 1
        for label in ("normal", "metastasizing"):
            per = [
                sum(e.label == label for e in manifest.fold_entries(f))
                for f in manifest.folds
            ]
            assert max(per) - min(per) <= 1

    def test_deterministic_in_seed(self):
        again = stratified_kfold(make_manifest(), k=5, seed=0)
        other = stratified_kfold(make_manifest(), k=5, seed=1)
        assert again.entries == self.manifest.entries
        assert other.entries != self.manifest.entries

    def test_k_below_two(self):
        with pytest.raises(ConfigurationError):
            stratified_kfold(make_manifest(), k=1)

    def test_k_above_smallest_class(self):
        with pytest.raises(ConfigurationError):
            stratified_kfold(make_manifest(3, 10), k=4)


class TestTrainingSet:
    """Leakage-free augmented training pools."""

    def setup_method(self):
        self.manifest = stratified_kfold(make_manifest(), k=5, seed=0)
        self.source = fake_source()

    def test_pool_size(self):
        """176 raw training images plus two variants each give 528."""
        pool = build_training_set(
            self.manifest, 0, augment_factor=2, seed=0, source=self.source
        )
        assert pool.raw_count == 176
        assert pool.augmented_count == 352
        assert len(pool) == 528
        assert pool.images.shape == (528, 3, 8, 8)
        assert pool.labels.shape == (528,)

    def test_no_test_fold_content(self):
        pool = build_training_set(self.manifest, 2, seed=0, source=self.source)
        test_ids = {e.image_id for e in self.manifest.fold_entries(2)}
        for e in pool.entries:
            assert e.image_id not in test_ids
            assert e.parent_id not in test_ids

    def test_variants_keep_parent_label(self):
        pool = build_training_set(self.manifest, 1, seed=0, source=self.source)
        by_id = {e.image_id: e for e in self.manifest.entries}
        for e in pool.entries:
            if e.augmented:
                assert e.label == by_id[e.parent_id].label

    def test_deterministic(self):
        a = build_training_set(self.manifest, 3, seed=4, source=self.source)
        b = build_training_set(self.manifest, 3, seed=4, source=self.source)
        np.testing.assert_array_equal(a.images, b.images)

    def test_zero_factor_gives_raw_only(self):
        pool = build_training_set(
            self.manifest, 0, augment_factor=0, source=self.source
        )
        assert len(pool) == 176

    def test_zca_variants(self):
        manifest = stratified_kfold(make_manifest(10, 10), k=2)
        pool = build_training_set(
            manifest, 0, augment_factor=1, kinds=["zca"], source=self.source
        )
        assert pool.augmented_count == 10
        assert pool.images.min() >= 0.0
        assert pool.images.max() <= 1.0

    def test_unknown_fold(self):
        with pytest.raises(ParameterError):
            build_training_set(self.manifest, 9, source=self.source)

    def test_negative_factor(self):
        with pytest.raises(ParameterError):
            build_training_set(self.manifest, 0, augment_factor=-1, source=self.source)

    def test_audit_catches_variant_of_test_image(self):
        test_image = self.manifest.fold_entries(0)[0]
        leaked = ManifestEntry(
            "leak",
            "",
            test_image.label,
            fold=1,
            augmented=True,
            parent_id=test_image.image_id,
        )
        with pytest.raises(LeakageError) as exc:
            audit_training_set(self.manifest, [leaked], 0)
        assert exc.value.leaked == ["leak"]
