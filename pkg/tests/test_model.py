"""Tests for the color upsampling network."""

import numpy as np
import pytest

from colorflow.autograd.tensor import Tensor, gradcheck
from colorflow.errors import ConfigError, InvalidRatioError, ShapeError
from colorflow.geometry import LrHrMapping, PointCloud, devoxelize, voxelize
from colorflow.model import (
    ModelParams,
    TrainConfig,
    assemble_batch,
    encode_offsets,
    expand_features,
    forward,
    forward_batch,
    mlp_widths,
    predict,
    predict_batch,
)


def textured_cloud(extent=12, seed=0, fill=0.3):
    rng = np.random.default_rng(seed)
    n = int(fill * extent**3)
    coords = np.unique(rng.integers(0, extent, size=(n, 3)), axis=0)
    colors = np.clip(0.5 + 0.3 * np.sin(coords / 2.0) + rng.normal(0, 0.05, coords.shape), 0, 1)
    return PointCloud(coords=coords, colors=colors, extent=extent)


class TestTrainConfig:
    """Tests for training configuration."""

    def test_ratio_presets(self):
        """Test channel and batch presets per ratio."""
        assert (TrainConfig.for_ratio(2).channels, TrainConfig.for_ratio(2).batch_size) == (32, 16)
        assert (TrainConfig.for_ratio(5).channels, TrainConfig.for_ratio(5).batch_size) == (64, 8)
        assert (TrainConfig.for_ratio(10).channels, TrainConfig.for_ratio(10).batch_size) == (64, 4)
        assert TrainConfig.for_ratio(7).channels == 64
        assert TrainConfig.for_ratio(3, channels=12).channels == 12

    def test_defaults(self):
        """Test the default training config."""
        config = TrainConfig()

        assert config.learning_rate == pytest.approx(1e-3)
        assert config.decay_factor == pytest.approx(0.1)
        assert config.decay_period == 10
        assert config.epochs == 25
        assert config.weight_decay == pytest.approx(1e-4)

    def test_validation(self):
        """Test that invalid values are rejected."""
        with pytest.raises(InvalidRatioError):
            TrainConfig(ratio=1)
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig(precision="float16")
        with pytest.raises(ConfigError):
            TrainConfig(kernel_size=2)

    def test_unknown_key(self):
        """Test that unknown options are rejected."""
        with pytest.raises(ConfigError, match="unknown training option"):
            TrainConfig.from_dict({"epoch": 3})

    def test_dict_round_trip(self):
        """Test converting a config to a dict and back."""
        config = TrainConfig(epochs=3, channels=8)

        assert TrainConfig.from_dict(config.to_dict()) == config


class TestArchitecture:
    """Tests for layer widths and parameter layout."""

    def test_mlp_widths(self):
        """Test the MLP layer widths."""
        assert mlp_widths(32) == [35, 17, 8, 3]
        assert mlp_widths(64) == [67, 33, 16, 3]
        assert mlp_widths(32, positional_encoding=2) == [47, 23, 11, 3]

    def test_parameter_shapes(self):
        """Test parameter shapes for a small model."""
        params = ModelParams.init(channels=8, v_train=2, blocks=2)

        shapes = {name: p.shape for name, p in params.parameters().items()}

        assert shapes["extractor.stem.conv.weight"] == (27, 3, 8)
        assert shapes["extractor.blocks.1.conv2.weight"] == (27, 8, 8)
        assert shapes["mlp.0.weight"] == (11, 5)
        assert shapes["mlp.2.weight"] == (2, 3)
        assert shapes["mlp.2.bias"] == (3,)

    def test_num_parameters(self):
        """Test the parameter count."""
        params = ModelParams.init(channels=4, v_train=2, blocks=1)

        conv = 27 * 3 * 4 + 2 * 27 * 4 * 4
        bn = 3 * 2 * 4
        mlp = (7 * 3 + 3) + (3 * 1 + 1) + (1 * 3 + 3)
        assert params.num_parameters() == conv + bn + mlp

    def test_same_seed_same_weights(self):
        """Test that one seed gives one set of weights."""
        a = ModelParams.init(channels=4, v_train=2, seed=5, blocks=1)
        b = ModelParams.init(channels=4, v_train=2, seed=5, blocks=1)

        for name, array in a.state_arrays().items():
            np.testing.assert_array_equal(array, b.state_arrays()[name])

    def test_precision(self):
        """Test building a 64-bit model."""
        params = ModelParams.init(channels=4, v_train=2, precision="float64", blocks=1)

        assert params.dtype == np.float64
        assert params.extractor.stem_conv.weight.dtype == np.float64


class TestExpandFeatures:
    """Tests for building per-HR-point query vectors."""

    def test_concatenates_parent_feature_and_offset(self):
        """Test that each HR row is its parent feature followed by its offset."""
        lr_features = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        mapping = LrHrMapping(map=np.array([1, 0, 1]), voxel_size=2, n_lr=2)
        offsets = np.array([[-1.0, 1.0, -1.0], [1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]])

        out = expand_features(lr_features, mapping, offsets)

        np.testing.assert_array_equal(
            out.data,
            [[3, 4, -1, 1, -1], [1, 2, 1, 1, 1], [3, 4, -1, -1, -1]],
        )

    def test_positional_encoding(self):
        """Test sine and cosine bands appended to offsets."""
        offsets = np.array([[0.5, -1.0, 0.0]])

        encoded = encode_offsets(offsets, 2)

        assert encoded.shape == (1, 3 + 12)
        np.testing.assert_allclose(encoded[0, :3], offsets[0])
        np.testing.assert_allclose(encoded[0, 3:6], np.sin(np.pi * offsets[0]), atol=1e-12)
        np.testing.assert_allclose(encoded[0, 12:15], np.cos(2 * np.pi * offsets[0]), atol=1e-12)
        np.testing.assert_array_equal(encode_offsets(offsets, 0), offsets)

    def test_shape_checks(self):
        """Test mismatched offsets and feature rows."""
        mapping = LrHrMapping(map=np.array([0, 0]), voxel_size=2, n_lr=1)

        with pytest.raises(ShapeError):
            expand_features(Tensor(np.zeros((1, 2))), mapping, np.zeros((3, 3)))
        with pytest.raises(ShapeError):
            expand_features(Tensor(np.zeros((2, 2))), mapping, np.zeros((2, 3)))


class TestForward:
    """Tests for the full forward pass."""

    def test_zero_output_layer_reproduces_devoxelization(self):
        """Test that a zeroed output layer gives devox colors exactly."""
        hr = textured_cloud()
        lr, mapping = voxelize(hr, 2)
        params = ModelParams.init(channels=4, v_train=2, blocks=1, zero_init_output=True)

        colors = forward(lr, hr.without_colors(), params)

        np.testing.assert_array_equal(colors, devoxelize(lr.colors, mapping))

    def test_output_range_and_shape(self):
        """Test one color in [0, 1] per HR point."""
        hr = textured_cloud(seed=1)
        lr, _ = voxelize(hr, 3)
        params = ModelParams.init(channels=4, v_train=3, blocks=1, seed=2)

        colors = forward(lr, hr, params)

        assert colors.shape == (len(hr), 3)
        assert colors.dtype == np.float64
        assert colors.min() >= 0.0
        assert colors.max() <= 1.0

    def test_test_ratio_may_differ_from_training_ratio(self):
        """Test running at a ratio other than the training ratio."""
        hr = textured_cloud(seed=2)
        lr, _ = voxelize(hr, 4)
        params = ModelParams.init(channels=4, v_train=2, blocks=1)

        assert forward(lr, hr, params, v=4).shape == (len(hr), 3)

    def test_hr_permutation_equivariance(self):
        """Test that permuting HR points permutes the output."""
        hr = textured_cloud(seed=3)
        lr, _ = voxelize(hr, 2)
        params = ModelParams.init(channels=4, v_train=2, blocks=1, seed=1, precision="float64")
        perm = np.random.default_rng(0).permutation(len(hr))
        permuted = PointCloud(coords=hr.coords[perm], colors=None, extent=hr.extent)

        base = forward(lr, hr, params)
        shuffled = forward(lr, permuted, params)

        np.testing.assert_allclose(shuffled, base[perm], atol=1e-12)

    def test_lr_permutation_invariance(self):
        """Test that LR point order does not change the output."""
        hr = textured_cloud(seed=4)
        lr, _ = voxelize(hr, 2)
        params = ModelParams.init(channels=4, v_train=2, blocks=1, seed=1, precision="float64")
        perm = np.random.default_rng(1).permutation(len(lr))
        permuted = PointCloud(coords=lr.coords[perm], colors=lr.colors[perm], extent=lr.extent)

        np.testing.assert_allclose(forward(permuted, hr, params), forward(lr, hr, params), atol=1e-10)

    def test_forward_batch_matches_single_forward(self):
        """Test that batching objects gives the same colors as one at a time."""
        clouds = [textured_cloud(seed=s) for s in (5, 6, 7)]
        pairs = [(voxelize(hr, 2)[0], hr) for hr in clouds]
        params = ModelParams.init(channels=4, v_train=2, blocks=1, seed=3, precision="float64")

        batched = forward_batch(pairs, params)

        assert len(batched) == 3
        for (lr, hr), colors in zip(pairs, batched, strict=True):
            np.testing.assert_allclose(colors, forward(lr, hr, params), atol=1e-10)

    def test_predict_is_unclamped(self):
        """Test that predict returns colors before clamping."""
        hr = textured_cloud(seed=8)
        lr, _ = voxelize(hr, 2)
        params = ModelParams.init(channels=4, v_train=2, blocks=1, seed=4)
        params.mlp[-1].bias.data[:] = 5.0

        raw = predict(lr, hr, params).data

        assert raw.max() > 1.0
        assert forward(lr, hr, params).max() == 1.0

    def test_batch_ratio_mismatch(self):
        """Test that one batch cannot mix ratios."""
        hr = textured_cloud(seed=9)
        lr2, map2 = voxelize(hr, 2)
        lr3, map3 = voxelize(hr, 3)

        with pytest.raises(ShapeError, match="one ratio"):
            assemble_batch([(lr2, hr, map2), (lr3, hr, map3)])


class TestEndToEndGradient:
    """Central-difference check of the loss through extractor, gather and MLP."""

    def test_gradcheck_small_cloud(self):
        """Test model gradients on a small cloud by central differences."""
        hr = textured_cloud(extent=6, seed=10, fill=0.4)
        lr, mapping = voxelize(hr, 2)
        params = ModelParams.init(channels=3, v_train=2, blocks=1, seed=7, precision="float64")
        batch = assemble_batch([(lr, hr, mapping)], params.kernel_size, params.dtype)
        inputs = [
            params.mlp[0].weight,
            params.mlp[2].bias,
            params.extractor.stem_bn.gamma,
            params.extractor.blocks[0].conv2.weight,
        ]

        error = gradcheck(lambda: predict_batch(batch, params, training=True, update_running=False)[0], inputs)

        assert error < 1e-4
