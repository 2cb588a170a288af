"""End-to-end tests of the command-line interface."""

import csv
import json

import numpy as np
import pytest

from cellattn.cli import build_parser, main
from cellattn.data import DatasetManifest
from cellattn.evaluation import (
    METRIC_NAMES,
    CrossValidationReport,
    FoldResult,
    MetricsReport,
)
from cellattn.models import AttentionClassifier, init_encoder
from cellattn.utils import file_sha256


pytestmark = pytest.mark.integration

TINY_MODEL = """\
# small enough to train in a test
image_side = 16
backbone.blocks = 2
backbone.base_filters = 2
backbone.growth = 2
backbone.layers_per_block = 2
backbone.downsample_stages = 2
mlp_dims = 8
mlp_dropout = 0.0
epochs = 1
batch_size = 4
augment_factor = 1
augment_kinds = noise
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_MODEL)
    return path


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / "data"
    code = main(
        [
            "gen",
            "--out",
            str(out),
            "--n-normal",
            "4",
            "--n-meta",
            "4",
            "--folds",
            "2",
            "--seed",
            "3",
            "--set",
            "image_side=16",
        ]
    )
    assert code == 0
    return out / "manifest.json"


def write_report(path, values):
    folds = [
        FoldResult(i, MetricsReport(**{m: v for m in METRIC_NAMES}, n_samples=4))
        for i, v in enumerate(values)
    ]
    report = CrossValidationReport("MHL-dense_concat", {}, {"regime": "short"}, folds)
    return report.save_json(path)


class TestGen:
    """Synthetic dataset generation."""

    def test_manifest_and_snapshot(self, dataset):
        manifest = DatasetManifest.load_file(dataset)
        assert manifest.class_counts() == {"normal": 4, "metastasizing": 4}
        assert manifest.folds == [0, 1]
        assert manifest.image_side == 16
        snap = json.loads((dataset.parent / "resolved_config.json").read_text())
        assert snap["command"] == "gen"
        assert snap["seed"] == 3

    def test_same_seed_same_manifest(self, tmp_path, dataset):
        again = tmp_path / "again"
        args = ["gen", "--out", str(again), "--n-normal", "4", "--n-meta", "4"]
        args += ["--folds", "2", "--seed", "3", "--set", "image_side=16", "--jobs", "2"]
        assert main(args) == 0
        assert file_sha256(again / "manifest.json") == file_sha256(dataset)

    def test_empty_class_is_a_usage_error(self, tmp_path, capsys):
        code = main(["gen", "--out", str(tmp_path), "--n-normal", "0"])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path):
        assert main(["gen", "--out", str(tmp_path), "--set", "colour=red"]) == 2


class TestTrainAndEval:
    """Training, evaluation and explanation of a checkpoint."""

    def test_zero_learning_rate_saves_the_initialisation(
        self, tmp_path, tiny_cfg, dataset
    ):
        out = tmp_path / "train"
        args = ["train", "--data", str(dataset), "--config", str(tiny_cfg)]
        args += ["--out", str(out), "--lr", "0", "--seed", "5"]
        assert main(args) == 0
        model = AttentionClassifier.load(out / "model.tnsr")
        initial = init_encoder(model.config, 5)
        assert model.params.names() == initial.names()
        for name in initial.names():
            np.testing.assert_array_equal(
                model.params.get(name).data, initial.get(name).data
            )
        assert len(json.loads((out / "loss_trace.json").read_text())) == 1

    def test_train_on_fold(self, tmp_path, tiny_cfg, dataset):
        out = tmp_path / "train"
        args = ["train", "--data", str(dataset), "--config", str(tiny_cfg)]
        args += ["--out", str(out), "--fold", "1", "--family", "rgb"]
        assert main(args) == 0
        model = AttentionClassifier.load(out / "model.tnsr")
        assert model.config.family.value == "rgb"

    def test_missing_checkpoint(self, tmp_path, dataset):
        args = ["eval", "--data", str(dataset), "--checkpoint"]
        args += [str(tmp_path / "absent.tnsr"), "--out", str(tmp_path / "ev")]
        assert main(args) == 2

    def test_missing_manifest(self, tmp_path, tiny_cfg):
        args = ["train", "--data", str(tmp_path / "none.json")]
        args += ["--config", str(tiny_cfg), "--out", str(tmp_path / "t")]
        assert main(args) == 3

    def test_cv_eval_explain_aggregate(self, tmp_path, tiny_cfg, dataset, capsys):
        cv_out = tmp_path / "cv"
        args = ["cv", "--data", str(dataset), "--config", str(tiny_cfg)]
        args += ["--out", str(cv_out), "--jobs", "2"]
        assert main(args) == 0
        report = CrossValidationReport.load_json(cv_out / "metrics.json")
        assert [f.fold for f in report.folds] == [0, 1]
        assert (cv_out / "metrics.csv").exists()
        checkpoint = cv_out / "fold_0" / "model.tnsr"
        assert checkpoint.exists()
        assert "AUC-ROC macro" in capsys.readouterr().out

        ev_out = tmp_path / "eval"
        args = ["eval", "--data", str(dataset), "--checkpoint", str(checkpoint)]
        args += ["--fold", "0", "--out", str(ev_out)]
        assert main(args) == 0
        metrics = json.loads((ev_out / "metrics.json").read_text())
        assert metrics["metrics"]["n_samples"] == 4
        assert (ev_out / "roc.csv").exists()

        ex_out = tmp_path / "explain"
        args = ["explain", "--data", str(dataset), "--checkpoint", str(checkpoint)]
        args += ["--fold", "0", "--out", str(ex_out), "--target", "predicted"]
        assert main(args) == 0
        index = json.loads((ex_out / "saliency" / "index.json").read_text())
        assert len(index) == 4
        for record in index:
            assert (ex_out / "saliency" / f"{record['image_id']}.tnsr").exists()
            assert sum(record["channel_focus"].values()) == pytest.approx(1.0)

        agg_out = tmp_path / "agg"
        args = ["aggregate", "--data", str(dataset), "--out", str(agg_out)]
        args += ["--saliency", str(ex_out / "saliency")]
        assert main(args) == 0
        for cls_name in ("normal", "metastasizing"):
            ratio = json.loads((agg_out / f"ratio_{cls_name}.json").read_text())
            total = ratio["positive"] + ratio["negative"] + ratio["neutral"]
            assert total == pytest.approx(1.0)
            assert (agg_out / f"gmean_gradcam_{cls_name}.png").exists()

    def test_aggregate_needs_explain_output(self, tmp_path, dataset):
        args = ["aggregate", "--data", str(dataset), "--out", str(tmp_path / "a")]
        args += ["--saliency", str(tmp_path / "nothing")]
        assert main(args) == 2


class TestStats:
    """Welch comparison of saved cross-validation reports."""

    def test_needs_two_reports(self, tmp_path):
        path = write_report(tmp_path / "a" / "metrics.json", [0.8, 0.9])
        assert main(["stats", str(path), "--out", str(tmp_path / "s")]) == 2

    def test_identical_reports(self, tmp_path):
        a = write_report(tmp_path / "a" / "metrics.json", [0.8, 0.9, 0.85])
        b = write_report(tmp_path / "b" / "metrics.json", [0.8, 0.9, 0.85])
        out = tmp_path / "s"
        assert main(["stats", str(a), str(b), "--out", str(out)]) == 0
        with (out / "ttest_long.csv").open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(METRIC_NAMES)
        assert all(float(r["p"]) == pytest.approx(1.0) for r in rows)
        assert all(r["significant"] == "False" for r in rows)
        assert rows[0]["b"].endswith("@b")
        with (out / "ttest.csv").open(newline="") as fh:
            table = list(csv.reader(fh))
        name = "MHL-dense_concat/short"
        assert table[0] == [METRIC_NAMES[0], name, f"{name}@b"]
        assert table[1] == [name, "", "1"]
        assert table[2] == [f"{name}@b", "", ""]

    def test_three_families_grid(self, tmp_path):
        values = {
            "a": [0.9, 0.91, 0.93, 0.92, 0.9],
            "b": [0.7, 0.72, 0.69, 0.71, 0.7],
            "c": [0.9, 0.92, 0.91, 0.93, 0.89],
        }
        paths = [
            str(write_report(tmp_path / k / "metrics.json", v))
            for k, v in values.items()
        ]
        out = tmp_path / "s"
        assert main(["stats", *paths, "--out", str(out)]) == 0
        tests = json.loads((out / "ttest.json").read_text())
        assert len(tests) == 3 * len(METRIC_NAMES)
        with (out / "ttest.csv").open(newline="") as fh:
            table = list(csv.reader(fh))
        assert len(table) == 5 * len(METRIC_NAMES)
        for block in range(len(METRIC_NAMES)):
            header, first, second, third, blank = table[5 * block : 5 * block + 5]
            assert header[0] == METRIC_NAMES[block]
            assert len(header) == 4
            assert first[1] == ""
            assert first[2].endswith("*")
            assert not first[3].endswith("*")
            assert second[3].endswith("*")
            assert third[1:] == ["", "", ""]
            assert blank == []

    def test_malformed_report(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        good = write_report(tmp_path / "a" / "metrics.json", [0.8, 0.9])
        assert main(["stats", str(bad), str(good), "--out", str(tmp_path / "s")]) == 2


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
