import sys

import numpy as np
import pytest

from src.errors import DecodeError, InvalidInputError
from src.model import DepthMap
from src.persistence.imaging import read_rgb
from src.persistence.render import (
    INVALID_COLOR,
    RESOURCE_DIR,
    _plasma_reversed,
    colorize,
    export_colormaps,
    format_colormap,
    load_colormap,
    parse_colormap,
    render_depth,
)


class TestColormaps:
    @pytest.mark.parametrize("name", ["plasma_reversed", "grayscale"])
    def test_tables_have_256_entries(self, name):
        table = load_colormap(name)
        assert table.shape == (256, 3)
        assert table.dtype == np.uint8

    def test_grayscale_ramp(self):
        table = load_colormap("grayscale")
        np.testing.assert_array_equal(table[:, 0], np.arange(256))

    def test_plasma_reversed_runs_bright_to_dark(self):
        table = load_colormap("plasma_reversed").astype(int)
        assert table[0].sum() > table[-1].sum()

    @pytest.mark.parametrize("name", ["plasma_reversed", "grayscale"])
    def test_resource_files_shipped(self, name):
        resource = RESOURCE_DIR / f"{name}.txt"
        assert resource.exists()
        np.testing.assert_array_equal(load_colormap(name), parse_colormap(resource.read_text()))

    def test_plasma_reversed_loads_without_matplotlib(self, monkeypatch):
        monkeypatch.setitem(sys.modules, "matplotlib", None)
        load_colormap.cache_clear()
        try:
            table = load_colormap("plasma_reversed")
        finally:
            load_colormap.cache_clear()
        assert table.shape == (256, 3)
        np.testing.assert_array_equal(table[0], [240, 249, 33])
        np.testing.assert_array_equal(table[-1], [13, 8, 135])

    def test_plasma_resource_matches_matplotlib(self):
        pytest.importorskip("matplotlib")
        built = _plasma_reversed().astype(int)
        shipped = load_colormap("plasma_reversed").astype(int)
        assert np.abs(built - shipped).max() <= 1

    def test_tables_are_read_only(self):
        with pytest.raises(ValueError):
            load_colormap("grayscale")[0, 0] = 1

    def test_unknown_name(self):
        with pytest.raises(InvalidInputError):
            load_colormap("viridis")

    def test_text_format_round_trip(self):
        table = load_colormap("plasma_reversed")
        np.testing.assert_array_equal(parse_colormap(format_colormap(table, "plasma_reversed")), table)

    def test_short_table_rejected(self):
        with pytest.raises(DecodeError):
            parse_colormap("0 0 0\n1 1 1\n")

    def test_out_of_range_entry(self):
        text = "\n".join(["0 0 0"] * 255 + ["0 300 0"])
        with pytest.raises(DecodeError):
            parse_colormap(text)

    def test_export(self, tmp_path):
        written = export_colormaps(tmp_path)
        assert set(written) == {"plasma_reversed", "grayscale"}
        assert parse_colormap(written["grayscale"].read_text()).shape == (256, 3)


class TestColorize:
    def test_range_endpoints(self):
        depth = np.array([[0.0, 10.0], [-5.0, 50.0]])
        image = colorize(depth, 0.0, 10.0, "grayscale")
        assert image.shape == (2, 2, 3)
        assert image[0, 0, 0] == 0 and image[0, 1, 0] == 255
        assert image[1, 0, 0] == 0 and image[1, 1, 0] == 255

    def test_midpoint_index(self):
        image = colorize(np.array([[5.0]]), 0.0, 10.0, "grayscale")
        assert image[0, 0, 0] == 128

    def test_invalid_pixels_marked(self):
        mask = np.array([[True, False]])
        image = colorize(np.array([[1.0, 1.0]]), 0.0, 2.0, "grayscale", mask)
        assert tuple(image[0, 1]) == INVALID_COLOR

    def test_batch_axes_squeezed(self):
        assert colorize(np.ones((1, 1, 3, 4)), 0.0, 2.0).shape == (3, 4, 3)

    def test_empty_range(self):
        with pytest.raises(InvalidInputError):
            colorize(np.ones((2, 2)), 3.0, 3.0)

    def test_multiple_maps_rejected(self):
        with pytest.raises(InvalidInputError):
            colorize(np.ones((2, 1, 3, 3)), 0.0, 1.0)

    def test_render_writes_png(self, tmp_path):
        depth = DepthMap(np.linspace(0.1, 10.0, 12, dtype=np.float32).reshape(1, 1, 3, 4))
        out = tmp_path / "depth.png"
        image = render_depth(depth, 0.1, 10.0, "plasma_reversed", out)
        written = read_rgb(out)
        assert written.shape == (1, 3, 3, 4)
        np.testing.assert_allclose(written[0].transpose(1, 2, 0) * 255.0, image, atol=1e-3)
