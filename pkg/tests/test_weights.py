import json

import numpy as np
import pytest

from src.errors import (
    ArchiveError,
    ChecksumError,
    MissingTensorError,
    UnexpectedTensorError,
    UnsupportedVersionError,
    VariantMismatchError,
)
from src.model import ModelConfig, Variant, build
from src.persistence.weights import MAGIC, load_weights, read_header, save_weights


@pytest.fixture
def archive(tmp_path, xxs_model):
    return save_weights(xxs_model, tmp_path / "xxs.weights")


def _rewrite_header(path, edit):
    raw = path.read_bytes()
    first = raw.index(b"\n")
    second = raw.index(b"\n", first + 1)
    header = json.loads(raw[first + 1:second])
    edit(header)
    path.write_bytes(raw[:first + 1] + json.dumps(header).encode() + b"\n" + raw[second + 1:])


class TestRoundTrip:
    def test_reload_is_bit_exact(self, archive, xxs_model):
        loaded = load_weights(archive)
        assert loaded.config == xxs_model.config
        for name, value in xxs_model.weights.items():
            np.testing.assert_array_equal(loaded.weights[name], value)

    def test_reloaded_model_predicts_identically(self, archive, xxs_model, rng):
        image = rng.random((1, 3, 64, 64), dtype=np.float32)
        np.testing.assert_array_equal(load_weights(archive).predict(image), xxs_model.predict(image))

    @pytest.mark.parametrize("variant", list(Variant))
    def test_every_variant_round_trips(self, tmp_path, rng, variant):
        model = build(ModelConfig.preset(variant, input_size=(64, 64)), seed=5)
        path = save_weights(model, tmp_path / f"{variant.value.lower()}.weights")
        loaded = load_weights(path)
        assert loaded.config == model.config
        image = rng.random((1, 3, 64, 64), dtype=np.float32)
        np.testing.assert_array_equal(loaded.predict(image), model.predict(image))

    def test_header_describes_archive(self, archive, xxs_model):
        header = read_header(archive)
        assert header["variant"] == "XXS"
        assert header["activation"] == "relu"
        assert [t["name"] for t in header["tensors"]] == list(xxs_model.expected_shapes())

    def test_starts_with_magic(self, archive):
        assert archive.read_bytes().startswith(MAGIC + b"\n")

    def test_no_temporary_left_behind(self, archive):
        assert [p.name for p in archive.parent.iterdir()] == [archive.name]

    def test_explicit_config_with_other_input_size(self, archive, xxs_config):
        loaded = load_weights(archive, xxs_config.with_input_size(64, 128))
        assert loaded.config.input_size == (64, 128)


class TestRejection:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bogus.weights"
        path.write_bytes(b"NOT-WEIGHTS\n{}\n")
        with pytest.raises(ArchiveError):
            load_weights(path)

    def test_variant_mismatch(self, archive):
        with pytest.raises(VariantMismatchError):
            load_weights(archive, ModelConfig.preset("s"))

    def test_activation_mismatch(self, archive):
        with pytest.raises(ArchiveError):
            load_weights(archive, ModelConfig.preset("xxs", activation="silu", input_size=(64, 64)))

    def test_unsupported_version(self, archive):
        _rewrite_header(archive, lambda h: h.update(format_version=99))
        with pytest.raises(UnsupportedVersionError):
            load_weights(archive)

    def test_missing_tensor(self, archive):
        _rewrite_header(archive, lambda h: h.update(tensors=h["tensors"][:-1]))
        with pytest.raises(MissingTensorError) as info:
            load_weights(archive)
        assert info.value.names == ["decoder.conv_out.bias"]

    def test_unexpected_tensor(self, archive):
        def add(h):
            extra = dict(h["tensors"][-1], name="decoder.extra.bias")
            h["tensors"].append(extra)

        _rewrite_header(archive, add)
        with pytest.raises(UnexpectedTensorError):
            load_weights(archive)

    def test_corrupted_payload(self, archive):
        raw = bytearray(archive.read_bytes())
        raw[-3] ^= 0xFF
        archive.write_bytes(bytes(raw))
        with pytest.raises(ChecksumError) as info:
            load_weights(archive)
        assert info.value.tensor == "decoder.conv_out.bias"

    def test_truncated_payload(self, archive):
        archive.write_bytes(archive.read_bytes()[:-4])
        with pytest.raises(ChecksumError):
            load_weights(archive)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_weights(tmp_path / "absent.weights")
