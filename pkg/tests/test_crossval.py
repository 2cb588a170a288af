"""Tests for model evaluation and the cross-validation driver."""

import csv

import numpy as np
import pytest

from cellattn.data import DatasetManifest, ManifestEntry, stratified_kfold
from cellattn.evaluation import (
    METRIC_NAMES,
    CrossValidationReport,
    FoldResult,
    MetricsReport,
    TrainConfig,
    cross_validate,
    evaluate_model,
    image_source,
    run_fold,
)
from cellattn.models import init_encoder
from cellattn.testing import random_images, tiny_encoder_config
from cellattn.utils import ConfigurationError, InputError


def small_manifest(n=4, side=16, k=2):
    entries = [
        ManifestEntry(f"{label}_{i:03d}", f"images/{label}_{i:03d}.png", label)
        for label in ("normal", "metastasizing")
        for i in range(n)
    ]
    manifest = DatasetManifest(entries=entries, seed=0, image_side=side)
    return stratified_kfold(manifest, k=k) if k else manifest


def fake_source(side=16):
    def load(entry):
        rng = np.random.default_rng(sum(map(ord, entry.image_id)))
        image = rng.random((3, side, side)) * 0.5
        if entry.label == "normal":
            image[0] += 0.5
        return image.astype(np.float32)

    return load


def report_with(values):
    """A report whose every metric takes ``values[i]`` on fold ``i``."""
    folds = [
        FoldResult(
            fold=i,
            metrics=MetricsReport(**{name: v for name in METRIC_NAMES}, n_samples=4),
        )
        for i, v in enumerate(values)
    ]
    return CrossValidationReport("mhl_dense_concat", {}, {"regime": "short"}, folds)


class TestEvaluateModel:
    """Inference plus metrics."""

    def test_outputs(self):
        config = tiny_encoder_config()
        images = random_images(np.random.default_rng(0), 4)
        labels = np.array([0, 1, 0, 1])
        probs, logits, metrics = evaluate_model(
            config, init_encoder(config), images, labels, batch_size=3
        )
        assert probs.shape == (4, 2)
        assert logits.shape == (4, 2)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-5)
        assert metrics.n_samples == 4

    def test_empty(self):
        config = tiny_encoder_config()
        with pytest.raises(InputError):
            evaluate_model(
                config, init_encoder(config), np.zeros((0, 3, 16, 16)), np.zeros(0)
            )

    def test_image_source_resamples(self, tmp_path):
        manifest = small_manifest(side=32)
        manifest.root = tmp_path
        assert image_source(manifest, 32) == manifest.load
        assert image_source(manifest, 16) != manifest.load


class TestCrossValidationReport:
    """Aggregation across folds."""

    def test_mean_and_std(self):
        report = report_with([0.8, 0.9, 1.0])
        assert report.mean("recall") == pytest.approx(0.9)
        assert report.std("recall") == pytest.approx(np.std([0.8, 0.9, 1.0], ddof=1))
        assert report.summary()["f1_macro"]["values"] == [0.8, 0.9, 1.0]

    def test_undefined_auc_is_skipped(self):
        report = report_with([0.8, 0.9])
        folds = report.folds
        folds[0] = FoldResult(
            0, MetricsReport(**{**folds[0].metrics.to_dict(), "auc_macro": None})
        )
        assert report.mean("auc_macro") == pytest.approx(0.9)
        assert report.std("auc_macro") == 0.0
        assert report.values("auc_macro") == [None, 0.9]

    def test_all_undefined(self):
        report = report_with([0.5])
        report.folds[0] = FoldResult(
            0,
            MetricsReport(
                **{**report.folds[0].metrics.to_dict(), "auc_micro": None}
            ),
        )
        assert report.mean("auc_micro") is None
        assert "undefined" in report.format_table()

    def test_json_round_trip(self, tmp_path):
        report = report_with([0.7, 0.75])
        path = report.save_json(tmp_path / "out" / "metrics.json")
        loaded = CrossValidationReport.load_json(path)
        assert loaded.to_dict() == report.to_dict()
        assert loaded.regime == "short"

    def test_malformed_json(self):
        with pytest.raises(InputError):
            CrossValidationReport.from_dict({"model": "x"})

    def test_table_rows(self, tmp_path):
        report = report_with([0.5, 1.0])
        rows = report.table_rows()
        assert rows[0] == ["metric", "fold_0", "fold_1", "mean", "std"]
        assert [r[0] for r in rows[1:]][:2] == ["Recall", "Precision"]
        assert rows[1][3] == "0.750000"
        path = report.save_csv(tmp_path / "metrics.csv")
        with path.open(newline="") as fh:
            assert list(csv.reader(fh)) == rows


class TestCrossValidate:
    """Fold training and testing."""

    def setup_method(self):
        self.config = tiny_encoder_config()
        self.train = TrainConfig(
            epochs=1, batch_size=4, lr=0.01, augment_factor=1, augment_kinds="noise"
        )
        self.manifest = small_manifest()
        self.source = fake_source()

    def test_run_fold(self):
        result = run_fold(self.config, self.train, self.manifest, 1, self.source)
        assert result.fold == 1
        assert result.train_size == 8
        assert len(result.test_ids) == 4
        assert result.probs.shape == (4, 2)
        assert result.roc().auc >= 0.0
        assert len(result.loss_trace) == 1

    def test_one_result_per_fold_in_order(self):
        seen = []
        report = cross_validate(
            self.config,
            self.train,
            self.manifest,
            source=self.source,
            on_fold=lambda r: seen.append(r.fold),
        )
        assert [f.fold for f in report.folds] == [0, 1]
        assert sorted(seen) == [0, 1]
        assert report.model == self.config.name
        assert report.train["regime"] == "short"
        values = [f.metrics.recall for f in report.folds]
        assert report.mean("recall") == pytest.approx(np.mean(values))

    def test_threads_give_the_same_report(self):
        serial = cross_validate(
            self.config, self.train, self.manifest, source=self.source
        )
        threaded = cross_validate(
            self.config, self.train, self.manifest, jobs=2, source=self.source
        )
        assert serial.to_dict() == threaded.to_dict()

    def test_missing_fold_assignment(self):
        with pytest.raises(ConfigurationError):
            cross_validate(
                self.config, self.train, small_manifest(k=0), source=self.source
            )

    @pytest.mark.slow
    def test_learns_a_separable_cohort(self):
        """A red-intensity cue is learned well above chance."""
        manifest = small_manifest(n=10, k=2)
        train = TrainConfig(
            epochs=30, batch_size=4, lr=0.05, augment_factor=1, augment_kinds="noise"
        )
        report = cross_validate(
            tiny_encoder_config(), train, manifest, source=fake_source()
        )
        assert report.mean("auc_macro") > 0.6
