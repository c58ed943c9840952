import json

import numpy as np
import pytest

from src.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from src.persistence.dataset import DatasetManifest
from src.persistence.imaging import write_depth, write_rgb
from src.reporting import parse_lines


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, dict(parse_lines(out)), out


@pytest.fixture
def image_path(tmp_path, rng):
    return write_rgb(tmp_path / "scene.png", rng.random((1, 3, 60, 80), dtype=np.float32))


class TestUsage:
    @pytest.mark.parametrize(
        "argv",
        [
            [],
            ["profile"],
            ["profile", "--variant", "m"],
            ["profile", "--variant", "xxs", "--input-size", "99x100"],
            ["profile", "--variant", "xxs", "--input-size", "wide"],
            ["frobnicate"],
            ["--threads", "0", "profile", "--variant", "s"],
            ["eval", "--dataset", "x.yaml"],
        ],
    )
    def test_usage_errors_exit_2(self, capsys, argv):
        assert main(argv) == EXIT_USAGE

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])
        assert info.value.code == 0
        assert "meter 1.0.0" in capsys.readouterr().out


class TestProfile:
    def test_lines(self, capsys):
        code, values, out = run(capsys, "profile", "--variant", "xxs")
        assert code == EXIT_OK
        assert values["variant"] == "XXS"
        assert values["input_size"] == "256x192"
        assert int(values["params_total"]) > 0
        assert "layer: encoder.stem" in out

    def test_padded_width(self, capsys):
        _, values, _ = run(capsys, "profile", "--variant", "s", "--input-size", "636x192")
        assert values["working_size"] == "640x192"

    def test_table_and_report(self, capsys, tmp_path):
        report = tmp_path / "profile.json"
        code, values, out = run(capsys, "profile", "--variant", "xs", "--table", "--report-out", str(report))
        assert code == EXIT_OK
        assert out.startswith("table: ")
        assert json.loads(report.read_text())["params_total"] == int(values["params_total"])


class TestInfer:
    def test_random_model(self, capsys, tmp_path, image_path):
        out = tmp_path / "depth.png"
        raw = tmp_path / "depth.npy"
        code, values, _ = run(
            capsys, "infer", "--variant", "xxs", "--input-size", "64x64",
            "--image", str(image_path), "--out", str(out), "--raw-out", str(raw),
        )
        assert code == EXIT_OK
        assert values["output_size"] == "32x32"
        assert out.exists()
        depth = np.load(raw)
        assert depth.shape == (32, 32)
        assert 0.1 <= depth.min() and depth.max() <= 10.0

    def test_archive_variant_mismatch(self, capsys, tmp_path, image_path):
        archive = tmp_path / "xxs.weights"
        assert main(["init-weights", "--variant", "xxs", "--out", str(archive)]) == EXIT_OK
        code = main([
            "infer", "--weights", str(archive), "--variant", "s",
            "--image", str(image_path), "--out", str(tmp_path / "d.png"),
        ])
        assert code == EXIT_FAILURE

    def test_archive_at_smaller_size(self, capsys, tmp_path, image_path):
        archive = tmp_path / "xxs.weights"
        main(["--seed", "3", "init-weights", "--variant", "xxs", "--out", str(archive)])
        capsys.readouterr()
        code, values, _ = run(
            capsys, "infer", "--weights", str(archive), "--input-size", "64x64",
            "--image", str(image_path), "--out", str(tmp_path / "d.png"),
        )
        assert code == EXIT_OK
        assert values["variant"] == "XXS"

    def test_missing_image(self, capsys, tmp_path):
        code = main([
            "infer", "--variant", "xxs", "--image", str(tmp_path / "absent.png"), "--out", str(tmp_path / "d.png"),
        ])
        assert code == EXIT_FAILURE


class TestEval:
    def test_constant_baseline_on_plane(self, capsys, tmp_path, plane_dataset):
        report = tmp_path / "metrics.json"
        code, values, _ = run(
            capsys, "eval", "--constant-depth", "2", "--dataset", str(plane_dataset), "--report-out", str(report),
        )
        assert code == EXIT_OK
        assert values["rmse_m"] == "0.500000"
        assert values["rel"] == "0.200000"
        assert values["delta1"] == "0.000000"
        assert values["pixels_evaluated"] == str(2 * 24 * 32)
        assert json.loads(report.read_text())["samples_evaluated"] == 2

    def test_per_sample_csv(self, capsys, tmp_path, plane_dataset):
        csv = tmp_path / "samples.csv"
        code = main([
            "eval", "--constant-depth", "2.5", "--dataset", str(plane_dataset),
            "--report-out", str(tmp_path / "m.json"), "--per-sample-out", str(csv),
        ])
        assert code == EXIT_OK
        assert len(csv.read_text().strip().splitlines()) == 3

    def test_archive(self, capsys, tmp_path, plane_dataset):
        archive = tmp_path / "xxs.weights"
        main(["init-weights", "--variant", "xxs", "--out", str(archive)])
        capsys.readouterr()
        code, values, _ = run(
            capsys, "eval", "--weights", str(archive), "--dataset", str(plane_dataset),
            "--input-size", "64x48", "--report-out", str(tmp_path / "m.json"),
        )
        assert code == EXIT_OK
        assert float(values["rmse_m"]) >= 0.0
        assert values["samples_evaluated"] == "2"

    def test_empty_manifest(self, capsys, tmp_path):
        path = tmp_path / "manifest.yaml"
        DatasetManifest().save(path)
        assert main(["eval", "--constant-depth", "1", "--dataset", str(path)]) == EXIT_USAGE

    def test_missing_manifest(self, capsys, tmp_path):
        assert main(["eval", "--constant-depth", "1", "--dataset", str(tmp_path / "none.yaml")]) == EXIT_FAILURE


class TestOtherCommands:
    def test_bench(self, capsys):
        code, values, _ = run(capsys, "bench", "--variant", "xxs", "--input-size", "64x64", "--iters", "2", "--warmup", "0")
        assert code == EXIT_OK
        assert values["iterations"] == "2"
        assert float(values["fps"]) > 0

    def test_selfcheck(self, capsys):
        code, values, _ = run(capsys, "selfcheck", "--instances", "2", "--pairs", "2")
        assert code == EXIT_OK
        passed, total = values["summary"].split()[0].split("/")
        assert passed == total

    def test_selfcheck_detects_fault(self, capsys):
        assert main(["selfcheck", "--instances", "1", "--pairs", "2", "--fault", "sobel"]) == EXIT_FAILURE

    def test_loss_of_identical_maps(self, capsys, tmp_path):
        depth = np.tile(np.linspace(1.0, 4.0, 16), (16, 1))
        gt = write_depth(tmp_path / "gt.png", depth, "png16_mm")
        code, values, _ = run(capsys, "loss", "--gt", str(gt), "--pred", str(gt))
        assert code == EXIT_OK
        assert float(values["total"]) == pytest.approx(0.0, abs=1e-6)
        assert values["lambda1"] == "0.5"

    def test_loss_ablation(self, capsys, tmp_path):
        gt = write_depth(tmp_path / "gt.png", np.full((16, 16), 2.0), "png16_mm")
        pred = write_depth(tmp_path / "pred.png", np.full((16, 16), 3.0), "png16_mm")
        code, values, _ = run(capsys, "loss", "--gt", str(gt), "--pred", str(pred), "--ablation", "depth")
        assert code == EXIT_OK
        assert float(values["total"]) == pytest.approx(1.0)

    def test_augment_preview(self, capsys, tmp_path, image_path):
        depth = write_depth(tmp_path / "d.png", np.full((60, 80), 3.0), "png16_mm")
        out_dir = tmp_path / "preview"
        code, values, _ = run(
            capsys, "--seed", "4", "augment-preview", "--image", str(image_path),
            "--depth", str(depth), "--out-dir", str(out_dir),
        )
        assert code == EXIT_OK
        assert values["policy"] == "shifting"
        assert (out_dir / "rgb.png").exists() and (out_dir / "depth.png").exists()

    def test_augment_preview_reports_validated_params(self, capsys, tmp_path, image_path):
        config = tmp_path / "runtime.yaml"
        config.write_text("augment:\n  apply_prob: 1.0\n  shift_bounds_m:\n    indoor_cm: 0.05\n")
        depth = write_depth(tmp_path / "d.png", np.full((60, 80), 3.0), "png16_mm")
        code, values, _ = run(
            capsys, "--config", str(config), "--seed", "4", "augment-preview", "--image", str(image_path),
            "--depth", str(depth), "--out-dir", str(tmp_path / "preview"),
        )
        assert code == EXIT_OK
        assert values["d_shift_bound_m"] == "0.05"
        assert abs(float(values["d_shift_m"])) <= 0.05
        assert values["c_shift"].startswith("beta=")
        assert values["fired.c_shift"] == "true"

    def test_generate_dataset(self, capsys, tmp_path):
        code, values, _ = run(
            capsys, "generate-dataset", "--n", "2", "--out-dir", str(tmp_path / "ds"), "--input-size", "32x24",
        )
        assert code == EXIT_OK
        assert values["samples"] == "2"
        assert values["size"] == "32x24"
        assert (tmp_path / "ds" / "manifest.yaml").exists()

    def test_export_colormaps(self, capsys, tmp_path):
        code, values, _ = run(capsys, "export-colormaps", "--out-dir", str(tmp_path))
        assert code == EXIT_OK
        assert set(values) == {"colormap.plasma_reversed", "colormap.grayscale"}

    def test_bad_runtime_config(self, capsys, tmp_path):
        path = tmp_path / "runtime.yaml"
        path.write_text("cli: [1, 2]\n")
        assert main(["--config", str(path), "profile", "--variant", "s"]) == EXIT_FAILURE
