"""Tests for key=value config files, overrides and snapshots."""

import json

import pytest

from cellattn.config import (
    SNAPSHOT_NAME,
    RunConfig,
    apply_overrides,
    check_keys,
    load_config_file,
    parse_key_values,
    resolve_encoder_config,
    resolve_synthetic_config,
    resolve_train_config,
    snapshot,
    write_snapshot,
)
from cellattn.models import BackboneKind, Family
from cellattn.utils import ConfigurationError, DataIOError


class TestParsing:
    """key=value parsing."""

    def test_comments_and_blank_lines(self):
        text = "# model\nfamily = rgb\n\nheads=4  # four heads\n"
        assert parse_key_values(text) == {"family": "rgb", "heads": "4"}

    def test_later_keys_win(self):
        assert parse_key_values("lr=0.1\nlr=0.2") == {"lr": "0.2"}

    def test_error_cites_line(self):
        with pytest.raises(ConfigurationError, match="run.cfg:2"):
            parse_key_values("epochs=3\nnot a pair\n", source="run.cfg")

    def test_empty_key(self):
        with pytest.raises(ConfigurationError):
            parse_key_values("=5")

    def test_load_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("epochs=7\nbackbone.kind=residual\n")
        assert load_config_file(path) == {"epochs": "7", "backbone.kind": "residual"}

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIOError):
            load_config_file(tmp_path / "absent.cfg")

    def test_overrides_apply_in_order(self):
        merged = apply_overrides({"lr": "0.1"}, ["lr=0.2", "lr=0.3", "heads=8"])
        assert merged == {"lr": "0.3", "heads": "8"}

    def test_bad_override(self):
        with pytest.raises(ConfigurationError, match="--set #1"):
            apply_overrides({}, ["lr"])

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="learning_rate"):
            check_keys({"learning_rate": "0.1"})


class TestResolve:
    """Typed configs from parsed values."""

    def test_encoder(self):
        config = resolve_encoder_config(
            {
                "family": "rgb",
                "heads": "1",
                "backbone.kind": "residual",
                "image_side": "64",
                "mlp_dims": "32, 16",
            }
        )
        assert config.family is Family.RGB
        assert config.heads == 1
        assert config.backbone.kind is BackboneKind.RESIDUAL
        assert config.backbone.image_side == 64
        assert config.mlp_dims == (32, 16)

    def test_auto_head_width(self):
        config = resolve_encoder_config({"d_k": "auto"})
        assert config.to_dict() == resolve_encoder_config({}).to_dict()

    def test_bad_number(self):
        with pytest.raises(ConfigurationError, match="heads"):
            resolve_encoder_config({"heads": "two"})

    def test_train(self):
        train = resolve_train_config(
            {"epochs": "120", "lr": "0.01", "seed": "9", "shuffle": "no"}
        )
        assert train.epochs == 120
        assert train.seed == 9
        assert not train.shuffle
        assert train.regime.value == "long"

    def test_bad_boolean(self):
        with pytest.raises(ConfigurationError):
            resolve_train_config({"shuffle": "maybe"})

    def test_synthetic_inherits_image_side(self):
        assert resolve_synthetic_config({"image_side": "32"}).image_side == 32
        cfg = resolve_synthetic_config(
            {"image_side": "32", "synthetic.image_side": "48"}
        )
        assert cfg.image_side == 48

    def test_synthetic_ranges(self):
        cfg = resolve_synthetic_config({"synthetic.curve_count_meta": "2,3"})
        assert cfg.curve_count_meta == (2, 3)


class TestRunConfig:
    """Precedence and snapshots."""

    def setup_method(self):
        self.text = "seed=5\nepochs=10\nlr=0.1\n"

    def test_precedence(self, tmp_path):
        """File < dedicated flags < --set."""
        path = tmp_path / "run.cfg"
        path.write_text(self.text)
        run = RunConfig.build(
            "train",
            tmp_path / "out",
            seed=7,
            config_path=path,
            overrides=["lr=0.5"],
            extra={"lr": "0.2", "epochs": "3"},
        )
        assert run.seed == 7
        assert run.values["epochs"] == "3"
        assert run.train().lr == 0.5

    def test_set_beats_seed_flag(self, tmp_path):
        run = RunConfig.build("cv", tmp_path, seed=7, overrides=["seed=11"])
        assert run.seed == 11
        assert run.train().seed == 11

    def test_seed_defaults_to_zero(self, tmp_path):
        assert RunConfig.build("gen", tmp_path).seed == 0

    def test_unknown_override(self, tmp_path):
        with pytest.raises(ConfigurationError):
            RunConfig.build("cv", tmp_path, overrides=["nope=1"])

    def test_jobs(self, tmp_path):
        with pytest.raises(ConfigurationError):
            RunConfig.build("cv", tmp_path, jobs=0)

    def test_get_int(self, tmp_path):
        run = RunConfig.build("cv", tmp_path, overrides=["folds=3"])
        assert run.get_int("folds", 5) == 3
        assert RunConfig.build("cv", tmp_path).get_int("folds", 5) == 5

    def test_snapshot_is_stable(self, tmp_path):
        run = RunConfig.build("train", tmp_path, seed=1, overrides=["epochs=2"])
        resolved = {"train": run.train().to_dict()}
        assert snapshot(run, resolved) == snapshot(run, resolved)
        path = write_snapshot(run, resolved)
        assert path.name == SNAPSHOT_NAME
        data = json.loads(path.read_text())
        assert data["overrides"] == ["epochs=2"]
        assert data["resolved"]["train"]["epochs"] == 2
        assert data["seed"] == 1
