"""Tests for SGD training."""

import math

import numpy as np
import pytest

from cellattn.diagnostics import TrainingProfiler
from cellattn.evaluation import (
    LONG_REGIME_EPOCHS,
    EpochRegime,
    TrainConfig,
    train_model,
)
from cellattn.models import init_encoder
from cellattn.testing import override_parameter, random_images, tiny_encoder_config
from cellattn.utils import (
    ConfigurationError,
    InputError,
    NumericalError,
    ParameterError,
)


def same_trainables(a, b):
    return a.names() == b.names() and all(
        np.array_equal(a.get(n).data, b.get(n).data) for n in a.names()
    )


class TestTrainConfig:
    """Training settings."""

    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.epochs == 50
        assert cfg.lr == 0.001
        assert cfg.batch_size == 8
        assert cfg.regime is EpochRegime.SHORT

    def test_default_augmentations_include_zca(self):
        assert TrainConfig().augment_kinds == (
            "rotate",
            "width_shift",
            "height_shift",
            "zca",
        )

    def test_regime_boundary(self):
        assert TrainConfig(epochs=LONG_REGIME_EPOCHS - 1).regime is EpochRegime.SHORT
        assert TrainConfig(epochs=LONG_REGIME_EPOCHS).regime is EpochRegime.LONG

    def test_comma_separated_kinds(self):
        cfg = TrainConfig(augment_kinds="rotate,noise")
        assert cfg.augment_kinds == ("rotate", "noise")

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            TrainConfig(augment_kinds=("flip",))

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epochs": 0},
            {"lr": -0.1},
            {"lr": math.inf},
            {"batch_size": 0},
            {"augment_factor": -1},
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigurationError):
            TrainConfig(**kwargs)

    def test_to_dict_has_regime(self):
        data = TrainConfig(epochs=150).to_dict()
        assert data["regime"] == "long"
        assert isinstance(data["augment_kinds"], list)


class TestTrainModel:
    """Mini-batch SGD on binary cross-entropy."""

    def setup_method(self):
        self.config = tiny_encoder_config(family="mhl")
        self.rng = np.random.default_rng(31)
        self.images = random_images(self.rng, 3)
        self.labels = np.array([0, 1, 1])

    def test_step_count(self):
        """One epoch over three images in batches of two takes two steps."""
        train = TrainConfig(epochs=1, batch_size=2, lr=0.01)
        result = train_model(self.config, train, self.images, self.labels)
        assert result.steps == 2
        assert len(result.loss_trace) == 1
        assert result.loss_trace[0] > 0

    def test_zero_learning_rate_keeps_parameters(self):
        initial = init_encoder(self.config, 4)
        params = initial.copy()
        train = TrainConfig(epochs=2, batch_size=2, lr=0.0)
        train_model(self.config, train, self.images, self.labels, params=params)
        assert same_trainables(params, initial)

    def test_updates_parameters(self):
        initial = init_encoder(self.config, 4)
        params = initial.copy()
        train = TrainConfig(epochs=1, batch_size=3, lr=0.5)
        train_model(self.config, train, self.images, self.labels, params=params)
        assert not same_trainables(params, initial)

    def test_same_seed_same_result(self):
        train = TrainConfig(epochs=2, batch_size=2, lr=0.05, seed=3)
        a = train_model(self.config, train, self.images, self.labels)
        b = train_model(self.config, train, self.images, self.labels)
        assert a.loss_trace == b.loss_trace
        assert a.params.equals(b.params)

    def test_nan_image(self):
        images = self.images.copy()
        images[1, 0, 3, 3] = np.nan
        with pytest.raises(NumericalError) as exc:
            train_model(self.config, TrainConfig(epochs=1), images, self.labels)
        assert exc.value.epoch == 0
        assert exc.value.batch == 0

    def test_nan_parameter(self):
        params = init_encoder(self.config)
        with override_parameter(params, "mlp.out.bias", np.array([np.nan, 0.0])):
            with pytest.raises(NumericalError):
                train_model(
                    self.config,
                    TrainConfig(epochs=1),
                    self.images,
                    self.labels,
                    params=params,
                )

    def test_empty(self):
        with pytest.raises(InputError):
            train_model(
                self.config,
                TrainConfig(epochs=1),
                np.zeros((0, 3, 16, 16)),
                np.zeros(0, dtype=int),
            )

    def test_wrong_image_size(self):
        with pytest.raises(InputError):
            train_model(
                self.config,
                TrainConfig(epochs=1),
                random_images(self.rng, 3, side=8),
                self.labels,
            )

    def test_label_count_mismatch(self):
        with pytest.raises(InputError):
            train_model(
                self.config, TrainConfig(epochs=1), self.images, self.labels[:2]
            )

    def test_profiler_records_steps(self):
        train = TrainConfig(epochs=2, batch_size=2, lr=0.01)
        with TrainingProfiler() as profiler:
            train_model(self.config, train, self.images, self.labels, profiler=profiler)
        assert len(profiler.get_steps()) == 4
        assert [e.epoch for e in profiler.get_epochs()] == [0, 1]

    @pytest.mark.slow
    @pytest.mark.parametrize("family", ["mhl", "rgb"])
    def test_loss_decreases(self, family):
        config = tiny_encoder_config(family=family)
        images = random_images(self.rng, 4)
        labels = np.array([0, 1, 0, 1])
        train = TrainConfig(epochs=40, batch_size=4, lr=0.05, shuffle=False)
        result = train_model(config, train, images, labels)
        assert result.loss_trace[-1] < result.loss_trace[0]
