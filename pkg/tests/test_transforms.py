"""Tests for resampling, augmentation and ZCA whitening."""

import numpy as np
import pytest

from cellattn.data import (
    AugmentKind,
    ZcaWhitener,
    add_noise,
    augment,
    max_shift,
    parse_augment_kind,
    resample_image,
    rescale_unit,
    resize_plane,
    rotate,
    shift,
)
from cellattn.utils import ConfigurationError, InputError, ParameterError, UsageError


class TestResampling:
    """Bilinear resizing."""

    def setup_method(self):
        self.rng = np.random.default_rng(0)

    def test_same_size_is_a_copy(self):
        plane = self.rng.random((6, 6))
        out = resize_plane(plane, 6, 6)
        np.testing.assert_array_equal(out, plane)
        assert out is not plane

    def test_constant_plane_stays_constant(self):
        out = resize_plane(np.full((4, 4), 0.3), 16, 12)
        assert out.shape == (16, 12)
        np.testing.assert_allclose(out, 0.3)

    def test_downsample_keeps_range(self):
        plane = self.rng.random((32, 32))
        out = resize_plane(plane, 8, 8)
        assert out.min() >= plane.min() - 1e-12
        assert out.max() <= plane.max() + 1e-12

    def test_resample_image_shape(self):
        out = resample_image(self.rng.random((3, 20, 20)), 8)
        assert out.shape == (3, 8, 8)

    def test_resample_rejects_small_side(self):
        with pytest.raises(ParameterError):
            resample_image(self.rng.random((3, 20, 20)), 4)

    def test_resample_rejects_2d(self):
        with pytest.raises(InputError):
            resample_image(self.rng.random((20, 20)), 8)


class TestGeometric:
    """Rotation and translation."""

    def setup_method(self):
        self.rng = np.random.default_rng(1)
        self.image = self.rng.random((3, 16, 16))

    def test_max_shift_scales_with_side(self):
        """20 pixels at side 512, proportionally smaller below."""
        assert max_shift(512) == 20
        assert max_shift(256) == 10
        assert max_shift(8) == 1

    def test_zero_rotation_is_identity(self):
        np.testing.assert_array_equal(rotate(self.image, 0.0), self.image)

    def test_rotation_keeps_shape_and_fills_zero(self):
        out = rotate(np.ones((1, 16, 16)), 15.0)
        assert out.shape == (1, 16, 16)
        assert out[0, 0, 0] == pytest.approx(0.0, abs=1e-9)
        assert out[0, 8, 8] == pytest.approx(1.0)

    def test_width_shift_moves_columns(self):
        out = shift(self.image, dx=2)
        np.testing.assert_allclose(out[:, :, 2:], self.image[:, :, :-2])
        np.testing.assert_array_equal(out[:, :, :2], 0.0)

    def test_height_shift_moves_rows(self):
        out = shift(self.image, dy=-3)
        np.testing.assert_allclose(out[:, :-3, :], self.image[:, 3:, :])
        np.testing.assert_array_equal(out[:, -3:, :], 0.0)


class TestPhotometric:
    """Noise and rescaling."""

    def test_noise_is_clipped(self):
        rng = np.random.default_rng(2)
        out = add_noise(np.full((3, 8, 8), 0.99), 0.5, rng)
        assert out.min() >= 0.0
        assert out.max() <= 1.0

    def test_negative_sigma(self):
        with pytest.raises(ParameterError):
            add_noise(np.zeros((3, 8, 8)), -0.1, np.random.default_rng(0))

    def test_rescale_unit(self):
        out = rescale_unit(np.array([[2.0, 4.0], [6.0, 10.0]]))
        assert out.min() == 0.0
        assert out.max() == 1.0

    def test_rescale_constant_gives_zeros(self):
        np.testing.assert_array_equal(rescale_unit(np.full((2, 2), 5.0)), 0.0)


class TestZcaWhitener:
    """ZCA whitening."""

    def setup_method(self):
        self.rng = np.random.default_rng(3)

    def test_full_mode_decorrelates(self):
        """Whitened data has near-identity covariance."""
        mixing = np.eye(4) + 0.5 * self.rng.normal(size=(4, 4))
        rows = self.rng.normal(size=(4000, 4)) @ mixing
        images = rows.reshape(-1, 1, 2, 2)
        out = ZcaWhitener(epsilon=1e-8).fit(images).transform(images)
        flat = out.reshape(len(out), -1)
        cov = np.cov(flat, rowvar=False, bias=True)
        np.testing.assert_allclose(cov, np.eye(4), atol=1e-3)

    def test_zca_is_symmetric(self):
        whitener = ZcaWhitener().fit(self.rng.random((50, 1, 2, 2)))
        np.testing.assert_allclose(whitener.matrix_, whitener.matrix_.T, atol=1e-10)

    def test_default_epsilon_on_a_hundred_images(self):
        """Near-identity covariance for unit-range images at epsilon 1e-2."""
        images = self.rng.random((100, 1, 4, 4))
        out = ZcaWhitener().fit(images).transform(images)
        cov = np.cov(out.reshape(100, -1), rowvar=False, bias=True)
        off_diagonal = cov[~np.eye(16, dtype=bool)]
        assert np.abs(off_diagonal).max() < 0.05
        assert np.all(np.abs(np.diag(cov) - 1.0) < 0.1)

    def test_raw_scale_epsilon_shrinks_variance(self):
        """Without standardising, epsilon 1e-2 dominates the 0.08 pixel variance."""
        images = self.rng.random((100, 1, 4, 4))
        whitener = ZcaWhitener(standardize=False).fit(images)
        out = whitener.transform(images)
        cov = np.cov(out.reshape(100, -1), rowvar=False, bias=True)
        assert whitener.scale_ == 1.0
        assert np.diag(cov).max() < 0.95

    def test_output_ignores_input_scale(self):
        images = self.rng.random((60, 1, 2, 2))
        small = ZcaWhitener().fit(images).transform(images)
        large = ZcaWhitener().fit(images * 40.0).transform(images * 40.0)
        np.testing.assert_allclose(small, large, atol=1e-9)

    def test_constant_batch_does_not_divide_by_zero(self):
        images = np.full((4, 1, 2, 2), 0.5)
        out = ZcaWhitener().fit(images).transform(images)
        np.testing.assert_array_equal(out, 0.0)

    def test_patch_mode_shares_covariance(self):
        images = self.rng.random((10, 3, 8, 8))
        whitener = ZcaWhitener(patch=4).fit(images)
        assert whitener.matrix_.shape == (48, 48)
        assert whitener.transform(images).shape == images.shape

    def test_patch_mode_requires_divisible_images(self):
        with pytest.raises(ConfigurationError):
            ZcaWhitener(patch=3).fit(self.rng.random((4, 1, 8, 8)))

    def test_auto_patch(self):
        assert ZcaWhitener.auto_patch(3, 16) is None
        assert ZcaWhitener.auto_patch(3, 64) == 4

    def test_transform_before_fit(self):
        with pytest.raises(UsageError):
            ZcaWhitener().transform(np.zeros((1, 1, 2, 2)))

    def test_shape_mismatch(self):
        whitener = ZcaWhitener().fit(self.rng.random((5, 1, 2, 2)))
        with pytest.raises(InputError):
            whitener.transform(np.zeros((1, 1, 4, 4)))

    def test_needs_two_images(self):
        with pytest.raises(InputError):
            ZcaWhitener().fit(self.rng.random((1, 1, 2, 2)))

    def test_single_image_transform_with_rescale(self):
        whitener = ZcaWhitener().fit(self.rng.random((6, 1, 4, 4)))
        out = whitener.transform(self.rng.random((1, 4, 4)), rescale=True)
        assert out.shape == (1, 4, 4)
        assert out.min() == pytest.approx(0.0)
        assert out.max() == pytest.approx(1.0)


class TestAugment:
    """Randomised augmentation dispatch."""

    def setup_method(self):
        self.image = np.random.default_rng(4).random((3, 16, 16))

    @pytest.mark.parametrize(
        "kind", ["rotate", "width_shift", "height_shift", "noise"]
    )
    def test_output_in_unit_range(self, kind):
        out = augment(self.image, kind, np.random.default_rng(0))
        assert out.shape == self.image.shape
        assert out.min() >= 0.0
        assert out.max() <= 1.0

    def test_same_generator_same_result(self):
        a = augment(self.image, "rotate", np.random.default_rng(9))
        b = augment(self.image, "rotate", np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_zca_needs_whitener(self):
        with pytest.raises(UsageError):
            augment(self.image, AugmentKind.ZCA, np.random.default_rng(0))

    def test_zca_with_fitted_whitener(self):
        batch = np.random.default_rng(5).random((8, 3, 16, 16))
        whitener = ZcaWhitener(patch=4).fit(batch)
        out = augment(self.image, "zca", np.random.default_rng(0), whitener)
        assert out.min() >= 0.0
        assert out.max() <= 1.0

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            parse_augment_kind("flip")
