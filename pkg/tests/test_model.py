import numpy as np
import pytest

from src import kernels
from src.errors import ConfigurationError, DimensionError
from src.model import (
    Activation,
    MeterModel,
    ModelConfig,
    Variant,
    _meter_spec,
    build,
    decoder_forward,
    encoder_forward,
    is_running_statistic,
    meter_block,
    mv2_block,
    plan_layers,
    weight_shapes,
    working_size,
)


class TestModelConfig:
    @pytest.mark.parametrize("name", ["s", "XS", "xxs"])
    def test_presets_load(self, name):
        config = ModelConfig.preset(name)
        assert config.variant is Variant.parse(name)
        assert len(config.channels) == 10
        config.check()

    def test_unknown_variant(self):
        with pytest.raises(ConfigurationError):
            Variant.parse("m")

    def test_overrides_apply(self):
        config = ModelConfig.preset("xs", activation="silu", input_size=(96, 128))
        assert config.activation is Activation.SILU
        assert config.input_size == (96, 128)

    @pytest.mark.parametrize("size", [(100, 99), (0, 64), (63, 64)])
    def test_odd_or_empty_input_rejected(self, size):
        with pytest.raises(ConfigurationError):
            ModelConfig.preset("xxs", input_size=size).check()

    def test_heads_must_divide_dims(self):
        with pytest.raises(ConfigurationError):
            ModelConfig.preset("xxs", heads=5).check()

    def test_depth_range_ordered(self):
        with pytest.raises(ConfigurationError):
            ModelConfig.preset("xxs", depth_range=(5.0, 1.0)).check()

    def test_working_size_pads_to_alignment(self):
        assert working_size((192, 636), (64, 64)) == (192, 640)
        assert working_size((192, 256), (64, 64)) == (192, 256)
        config = ModelConfig.preset("s", input_size=(100, 100))
        assert config.working_size == (128, 128)
        assert config.output_size == (50, 50)


class TestLayerPlan:
    def test_weight_names_are_unique(self):
        layers = plan_layers(ModelConfig.preset("s"))
        names = [n for spec in layers for n in spec.weight_shapes()]
        assert len(names) == len(set(names))

    def test_param_count_excludes_running_statistics(self, xxs_model):
        stored = sum(int(np.prod(a.shape)) for a in xxs_model.weights.values())
        running = sum(int(np.prod(a.shape)) for n, a in xxs_model.weights.items() if is_running_statistic(n))
        assert running > 0
        assert xxs_model.param_count == stored - running

    def test_weight_shapes_follow_plan_order(self, xxs_config):
        names = list(weight_shapes(xxs_config))
        assert names[0] == "encoder.stem.weight"
        assert names[-1] == "decoder.conv_out.bias"

    def test_weight_shapes_validate_config(self):
        with pytest.raises(ConfigurationError):
            weight_shapes(ModelConfig.preset("xxs", heads=7))

    def test_variants_ordered_by_size(self):
        counts = [build(ModelConfig.preset(v, input_size=(64, 64))).param_count for v in (Variant.XXS, Variant.XS, Variant.S)]
        assert counts[0] < counts[1] < counts[2]


class TestBlocks:
    def test_mv2_residual_only_when_shapes_match(self, xxs_model, rng):
        c3 = xxs_model.config.channels[2]
        x = rng.uniform(0, 1, (1, c3, 16, 16)).astype(np.float32)
        wts, act = xxs_model.weights, kernels.relu
        same = mv2_block(x, wts, "encoder.stage2.mv2_1", 1, c3, c3, 1, act)
        assert same.shape == x.shape
        down = mv2_block(x, wts, "encoder.stage3.mv2", 2, c3, xxs_model.config.channels[3], 1, act)
        assert down.shape == (1, xxs_model.config.channels[3], 8, 8)

    def test_mv2_rejects_bad_stride(self, xxs_model, rng):
        c3 = xxs_model.config.channels[2]
        with pytest.raises(ConfigurationError):
            mv2_block(np.zeros((1, c3, 8, 8), np.float32), xxs_model.weights, "encoder.stage2.mv2_1", 3, c3, c3, 1)

    def test_meter_block_stage_shapes(self, xxs_model, rng):
        cfg = xxs_model.config
        c4, d4 = cfg.channels[3], cfg.transformer_dims[0]
        spec = _meter_spec(cfg, "encoder.stage3.meter", c4, d4)
        trace = []
        x = rng.uniform(0, 1, (1, c4, 8, 8)).astype(np.float32)
        out = meter_block(x, xxs_model.weights, spec, kernels.relu, trace=trace)
        stages = dict(trace)
        assert stages["local"] == (1, d4, 8, 8)
        assert stages["unfold"] == (1, 16, 4, d4)
        assert stages["concat"] == (1, c4 + d4, 8, 8)
        assert out.shape == x.shape

    def test_meter_block_channel_check(self, xxs_model):
        cfg = xxs_model.config
        spec = _meter_spec(cfg, "encoder.stage3.meter", cfg.channels[3], cfg.transformer_dims[0])
        with pytest.raises(DimensionError):
            meter_block(np.zeros((1, 3, 8, 8), np.float32), xxs_model.weights, spec)


class TestForward:
    @pytest.mark.parametrize("size,expected", [((192, 256), (96, 128)), ((192, 636), (96, 318))])
    def test_output_is_half_resolution(self, size, expected):
        model = build(ModelConfig.preset("xxs", input_size=size), seed=3)
        image = np.random.default_rng(0).random((1, 3) + size, dtype=np.float32)
        depth = model.forward(image)
        assert depth.shape == (1, 1) + expected
        assert depth.values.dtype == np.float32

    def test_s_variant_forward(self):
        model = build(ModelConfig.preset("s"), seed=11)
        image = np.random.default_rng(1).random((1, 3, 192, 256), dtype=np.float32)
        values = model.predict(image)
        assert values.shape == (1, 1, 96, 128)
        assert np.all(np.isfinite(values))

    def test_output_stays_in_depth_range_across_seeds(self, xxs_config):
        lo, hi = xxs_config.depth_range
        image = np.random.default_rng(2).random((1, 3, 64, 64), dtype=np.float32)
        for seed in range(100):
            values = build(xxs_config, seed=seed).predict(image)
            assert values.shape == (1, 1, 32, 32)
            assert np.all(np.isfinite(values))
            assert values.min() >= np.float32(lo)
            assert values.max() <= np.float32(hi)

    def test_forward_is_deterministic(self, xxs_model, rng):
        image = rng.random((1, 3, 64, 64), dtype=np.float32)
        np.testing.assert_array_equal(xxs_model.predict(image), xxs_model.predict(image))

    def test_same_seed_same_weights(self, xxs_config):
        a, b = build(xxs_config, seed=4), build(xxs_config, seed=4)
        for name in a.weights:
            np.testing.assert_array_equal(a.weights[name], b.weights[name])

    def test_batch_of_two(self, xxs_model, rng):
        images = rng.random((2, 3, 64, 64), dtype=np.float32)
        batched = xxs_model.predict(images)
        np.testing.assert_allclose(batched[1:], xxs_model.predict(images[1:]), atol=1e-5)

    def test_silu_activation(self):
        model = build(ModelConfig.preset("xxs", input_size=(64, 64), activation="silu"), seed=0)
        out = model.predict(np.full((1, 3, 64, 64), 0.5, np.float32))
        assert out.shape == (1, 1, 32, 32)

    def test_wrong_image_size(self, xxs_model):
        with pytest.raises(DimensionError):
            xxs_model.forward(np.zeros((1, 3, 64, 128), np.float32))

    def test_wrong_channel_count(self, xxs_model):
        with pytest.raises(DimensionError):
            xxs_model.forward(np.zeros((1, 1, 64, 64), np.float32))

    def test_encoder_skip_scales(self, xxs_model, rng):
        bottleneck, skips = encoder_forward(xxs_model, rng.random((1, 3, 64, 64), dtype=np.float32))
        c = xxs_model.config.channels
        assert bottleneck.shape == (1, c[5], 4, 4)
        assert [s.shape for s in skips] == [(1, c[1], 32, 32), (1, c[2], 16, 16), (1, c[3], 8, 8)]

    def test_decoder_checks_skip_shapes(self, xxs_model, rng):
        bottleneck, skips = encoder_forward(xxs_model, rng.random((1, 3, 64, 64), dtype=np.float32))
        with pytest.raises(DimensionError):
            decoder_forward(xxs_model, bottleneck, skips[:2])
        with pytest.raises(DimensionError):
            decoder_forward(xxs_model, bottleneck, [skips[1], skips[1], skips[2]])

    def test_resized_shares_weights(self, xxs_model):
        wider = xxs_model.resized(64, 128)
        assert wider.weights is xxs_model.weights
        assert wider.predict(np.zeros((1, 3, 64, 128), np.float32)).shape == (1, 1, 32, 64)


class TestWeightValidation:
    def test_weights_are_read_only(self, xxs_model):
        with pytest.raises(ValueError):
            xxs_model.weights["encoder.stem.weight"][0, 0, 0, 0] = 1.0

    def test_missing_tensor(self, xxs_model):
        weights = {k: v.copy() for k, v in xxs_model.weights.items() if k != "encoder.head.weight"}
        with pytest.raises(ConfigurationError):
            MeterModel(xxs_model.config, weights)

    def test_wrong_shape(self, xxs_model):
        weights = {k: v.copy() for k, v in xxs_model.weights.items()}
        weights["encoder.stem.weight"] = np.zeros((1, 3, 3, 3), np.float32)
        with pytest.raises(DimensionError):
            MeterModel(xxs_model.config, weights)

    def test_wrong_dtype(self, xxs_model):
        weights = {k: v.copy() for k, v in xxs_model.weights.items()}
        weights["encoder.stem.weight"] = weights["encoder.stem.weight"].astype(np.float64)
        with pytest.raises(ConfigurationError):
            MeterModel(xxs_model.config, weights)
