import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import InvalidInputError
from src.model import ModelConfig, Variant
from src.monitoring.metrics_collector import InferenceMetrics
from src.profiler import (
    REFERENCE_MACS,
    REFERENCE_PARAMS,
    LatencyStats,
    bench_latency,
    compare_latency,
    count_macs,
    count_params,
    profile_layers,
)
from src.reporting import parse_lines


class TestCounts:
    @pytest.mark.parametrize("variant", list(Variant))
    def test_params_near_published(self, variant):
        total = count_params(ModelConfig.preset(variant)).params_total
        assert abs(total / REFERENCE_PARAMS[variant] - 1.0) <= 0.05

    @pytest.mark.parametrize("variant,size", list(REFERENCE_MACS))
    def test_macs_near_published(self, variant, size):
        total = count_macs(ModelConfig.preset(variant), size).macs_total
        assert abs(total / REFERENCE_MACS[(variant, size)] - 1.0) <= 0.10

    @pytest.mark.parametrize("variant", list(Variant))
    def test_macs_scale_with_width(self, variant):
        config = ModelConfig.preset(variant)
        narrow = count_macs(config, (192, 256)).macs_total
        wide = count_macs(config, (192, 636)).macs_total
        assert abs((wide / narrow) / (636 / 256) - 1.0) <= 0.05

    def test_variants_ordered(self):
        macs = [count_macs(ModelConfig.preset(v), (192, 256)).macs_total for v in (Variant.XXS, Variant.XS, Variant.S)]
        assert macs[0] < macs[1] < macs[2]

    def test_param_count_matches_model(self, xxs_model):
        assert count_params(xxs_model).params_total == xxs_model.param_count

    def test_params_independent_of_input_size(self):
        config = ModelConfig.preset("xs")
        assert count_macs(config, (192, 256)).params_total == count_macs(config, (192, 636)).params_total

    def test_macs_counted_at_working_size(self):
        config = ModelConfig.preset("xxs")
        report = count_macs(config, (192, 636))
        assert report.working_size == (192, 640)
        assert report.macs_total == count_macs(config, (192, 640)).macs_total

    def test_per_layer_rows_sum_to_totals(self):
        report = profile_layers(ModelConfig.preset("s"))
        assert sum(r.params for r in report.per_layer) == report.params_total
        assert sum(r.macs for r in report.per_layer) == report.macs_total
        assert report.per_layer[0].name == "encoder.stem"
        assert report.per_layer[0].output_shape == (1, 16, 96, 128)
        assert report.per_layer[-1].output_shape == (1, 1, 96, 128)

    def test_weight_bytes_include_running_statistics(self, xxs_model):
        report = count_params(xxs_model)
        stored = sum(a.size for a in xxs_model.weights.values())
        assert report.bytes_weights == 4 * stored
        assert report.bytes_weights > 4 * report.params_total

    def test_inconsistent_totals_rejected(self):
        report = profile_layers(ModelConfig.preset("xxs"))
        data = report.model_dump()
        data["params_total"] += 1
        with pytest.raises(ValidationError):
            type(report)(**data)

    def test_report_lines_parse(self):
        report = count_macs(ModelConfig.preset("xs"), (192, 256))
        pairs = parse_lines("\n".join(report.to_lines()))
        keys = [k for k, _ in pairs]
        assert keys[:3] == ["variant", "input_size", "working_size"]
        assert keys.count("layer") == len(report.per_layer)
        assert dict(pairs)["macs_total"] == str(report.macs_total)
        assert "macs_reference_deviation" in keys

    def test_table_has_a_row_per_layer(self):
        report = profile_layers(ModelConfig.preset("xxs"))
        assert len(report.to_table().splitlines()) == len(report.per_layer) + 1


class TestBenchmark:
    def test_latency_figures(self, xxs_config):
        report = bench_latency(xxs_config, iterations=3, warmup=1)
        lat = report.latency
        assert lat.iterations == 3
        assert lat.mean_ms > 0
        assert report.fps == pytest.approx(1000.0 / lat.mean_ms)
        assert lat.outputs_consistent
        assert len(lat.output_sha256) == 64

    def test_same_seed_same_output_digest(self, xxs_model):
        a = bench_latency(xxs_model, iterations=1, warmup=0, seed=3)
        b = bench_latency(xxs_model, iterations=2, warmup=0, seed=3)
        assert a.latency.output_sha256 == b.latency.output_sha256

    def test_dataset_images(self, xxs_model, rng):
        images = [rng.random((1, 3, 64, 64), dtype=np.float32) for _ in range(2)]
        report = bench_latency(xxs_model, images=images, warmup=0)
        assert report.latency.source == "dataset"
        assert report.latency.iterations == 2
        assert report.latency.output_sha256 is None

    def test_resizes_to_requested_input(self, xxs_model):
        report = bench_latency(xxs_model, input_size=(64, 128), iterations=1, warmup=0)
        assert report.input_size == (64, 128)

    def test_threads_restored(self, xxs_model):
        from src import kernels

        bench_latency(xxs_model, iterations=1, warmup=0, threads=3)
        assert kernels.get_num_threads() == 1

    def test_metrics_recorded(self, xxs_model):
        metrics = InferenceMetrics()
        bench_latency(xxs_model, iterations=2, warmup=0, metrics=metrics)
        snapshot = metrics.snapshot()
        assert snapshot["meter_forward_total{variant=XXS}"] == 2.0
        assert snapshot["meter_model_params{variant=XXS}"] == xxs_model.param_count

    @pytest.mark.parametrize("iterations,warmup", [(0, 1), (1, -1)])
    def test_argument_checks(self, xxs_model, iterations, warmup):
        with pytest.raises(InvalidInputError):
            bench_latency(xxs_model, iterations=iterations, warmup=warmup)

    def test_empty_dataset(self, xxs_model):
        with pytest.raises(InvalidInputError):
            bench_latency(xxs_model, images=[])

    def test_compare_latency(self):
        base = profile_layers(ModelConfig.preset("xxs"))
        big = profile_layers(ModelConfig.preset("s"))

        def timed(report, fps):
            stats = LatencyStats(mean_ms=1000.0 / fps, std_ms=0.0, iterations=1, warmup=0, threads=1)
            return report.model_copy(update={"latency": stats, "fps": 1000.0 / stats.mean_ms})

        assert compare_latency(timed(base, 20.0), timed(big, 5.0)) is None
        assert compare_latency(timed(big, 5.0), timed(base, 20.0)) is None
        assert "slower" in compare_latency(timed(base, 4.0), timed(big, 5.0))
        with pytest.raises(InvalidInputError):
            compare_latency(base, big)
