import json

import pytest
import yaml

from src.config import DEFAULT_CONFIG_DIR, config_dir, load_model_config, load_runtime_config, section
from src.errors import ConfigurationError, UsageError
from src.model import ModelConfig
from src.reporting import check_lines, format_size, parse_lines, parse_size, write_json


class TestConfig:
    def test_bundled_files(self):
        assert config_dir() == DEFAULT_CONFIG_DIR
        presets = load_model_config()["presets"]
        assert set(presets) == {"s", "xs", "xxs"}
        assert section(load_runtime_config(), "cli")["seed"] == 42

    def test_config_dir_override(self, tmp_path, monkeypatch):
        (tmp_path / "model_config.yaml").write_text(yaml.safe_dump({"defaults": {}}))
        (tmp_path / "runtime_config.yaml").write_text(yaml.safe_dump({"cli": {"seed": 9}}))
        monkeypatch.setenv("METER_CONFIG_DIR", str(tmp_path))
        assert config_dir() == tmp_path
        assert load_runtime_config()["cli"]["seed"] == 9
        with pytest.raises(ConfigurationError):
            load_model_config()

    def test_missing_directory(self, tmp_path, monkeypatch):
        monkeypatch.setenv("METER_CONFIG_DIR", str(tmp_path / "nowhere"))
        with pytest.raises(ConfigurationError):
            load_runtime_config()

    def test_log_level_from_environment(self, monkeypatch):
        monkeypatch.setenv("METER_LOG_LEVEL", "debug")
        settings = load_runtime_config()
        assert settings["logging"]["log_level"] == "DEBUG"
        assert settings["logging"]["logger_name"] == "src"

    def test_environment_does_not_leak_into_cache(self, monkeypatch):
        monkeypatch.setenv("METER_LOG_LEVEL", "error")
        load_runtime_config()
        monkeypatch.delenv("METER_LOG_LEVEL")
        assert load_runtime_config()["logging"]["log_level"] == "INFO"

    def test_explicit_file(self, tmp_path):
        path = tmp_path / "runtime.yaml"
        path.write_text("profile:\n  iterations: 5\n")
        assert section(load_runtime_config(str(path)), "profile") == {"iterations": 5}

    @pytest.mark.parametrize("text", ["- a\n- b\n", "cli: [unclosed\n"])
    def test_malformed_file(self, tmp_path, text):
        path = tmp_path / "runtime.yaml"
        path.write_text(text)
        with pytest.raises(ConfigurationError):
            load_runtime_config(str(path))

    def test_section(self):
        assert section({}, "serve") == {}
        assert section({"serve": None}, "serve") == {}
        with pytest.raises(ConfigurationError):
            section({"serve": [1]}, "serve")

    def test_presets_read_from_file(self):
        config = ModelConfig.preset("xs")
        assert list(config.channels) == load_model_config()["presets"]["xs"]["channels"]


class TestReporting:
    @pytest.mark.parametrize("text,size", [("256x192", (192, 256)), ("636X192", (192, 636)), (" 64 x 48 ", (48, 64))])
    def test_parse_size(self, text, size):
        assert parse_size(text) == size
        assert format_size(size) == text.strip().replace(" ", "").lower()

    @pytest.mark.parametrize("text", ["", "256", "256x", "99x100", "0x0", "-2x4", "2.5x4"])
    def test_parse_size_rejects(self, text):
        with pytest.raises(UsageError):
            parse_size(text)

    def test_check_lines(self):
        assert check_lines(["a: 1", "layer[3].x: y z"]) == ["a: 1", "layer[3].x: y z"]
        with pytest.raises(ValueError):
            check_lines(["no separator"])
        with pytest.raises(ValueError):
            check_lines(["key:value"])

    def test_parse_lines_keeps_repeats(self):
        assert parse_lines("a: 1\n\nlayer: x\nlayer: y\n") == [("a", "1"), ("layer", "x"), ("layer", "y")]

    def test_write_json(self, tmp_path):
        config = ModelConfig.preset("xxs")
        path = write_json(config, tmp_path / "config.json")
        assert json.loads(path.read_text())["variant"] == "XXS"

    def test_write_json_to_missing_directory(self, tmp_path):
        with pytest.raises(OSError):
            write_json(ModelConfig.preset("xxs"), tmp_path / "absent" / "config.json")
