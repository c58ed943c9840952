"""Colormapped depth rendering and the 256-entry lookup-table resources."""
import logging
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from ..errors import DecodeError, InvalidInputError
from .imaging import write_rgb

logger = logging.getLogger(__name__)

RESOURCE_DIR = Path(__file__).resolve().parent.parent / "resources" / "colormaps"

COLORMAPS = ("plasma_reversed", "grayscale")

# missing measurements are drawn yellow
INVALID_COLOR = (255, 255, 0)

LUT_SIZE = 256


def parse_colormap(text: str, source: str = "<text>") -> np.ndarray:
    """Parse ``R G B`` lines into a (256, 3) uint8 table"""
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            values = [int(p) for p in parts]
        except ValueError:
            raise DecodeError(f"{source}:{lineno}: expected three integers, got '{line}'")
        if len(values) != 3 or any(v < 0 or v > 255 for v in values):
            raise DecodeError(f"{source}:{lineno}: expected three integers in [0, 255], got '{line}'")
        rows.append(values)
    if len(rows) != LUT_SIZE:
        raise DecodeError(f"{source}: colormap needs {LUT_SIZE} entries, found {len(rows)}")
    return np.asarray(rows, dtype=np.uint8)


def format_colormap(table: np.ndarray, title: str) -> str:
    lines = [f"# {title}", f"# {LUT_SIZE} entries, one 'R G B' triple per line"]
    lines += [f"{r} {g} {b}" for r, g, b in np.asarray(table, dtype=np.uint8)]
    return "\n".join(lines) + "\n"


def _plasma_reversed() -> np.ndarray:
    from matplotlib import colormaps

    rgba = colormaps["plasma_r"](np.linspace(0.0, 1.0, LUT_SIZE))
    return np.rint(rgba[:, :3] * 255.0).astype(np.uint8)


def _grayscale() -> np.ndarray:
    ramp = np.arange(LUT_SIZE, dtype=np.uint8)
    return np.stack([ramp, ramp, ramp], axis=1)


_BUILDERS = {"plasma_reversed": _plasma_reversed, "grayscale": _grayscale}


@lru_cache(maxsize=None)
def load_colormap(name: str) -> np.ndarray:
    """Lookup table by name; a shipped resource file wins over the built-in"""
    if name not in COLORMAPS:
        raise InvalidInputError(f"unknown colormap '{name}', expected one of {COLORMAPS}")
    resource = RESOURCE_DIR / f"{name}.txt"
    if resource.exists():
        table = parse_colormap(resource.read_text(), str(resource))
    else:
        table = _BUILDERS[name]()
    table.setflags(write=False)
    return table


def export_colormaps(out_dir: Union[str, Path]) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for name in COLORMAPS:
        path = out_dir / f"{name}.txt"
        path.write_text(format_colormap(load_colormap(name), name))
        written[name] = path
        logger.info(f"Wrote colormap {name} to {path}")
    return written


def colorize(
    depth: np.ndarray,
    min_m: float,
    max_m: float,
    colormap: Union[str, np.ndarray] = "plasma_reversed",
    valid_mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Map depths to an (H, W, 3) uint8 image through a lookup table"""
    if not (np.isfinite(min_m) and np.isfinite(max_m)) or max_m <= min_m:
        raise InvalidInputError(f"render range needs max_m > min_m, got [{min_m}, {max_m}]")
    table = load_colormap(colormap) if isinstance(colormap, str) else np.asarray(colormap, dtype=np.uint8)
    d = np.asarray(depth, dtype=np.float64)
    while d.ndim > 2:
        if d.shape[0] != 1:
            raise InvalidInputError(f"render takes a single depth map, got shape {d.shape}")
        d = d[0]
    t = np.clip((d - min_m) / (max_m - min_m), 0.0, 1.0)
    t = np.nan_to_num(t, nan=0.0)
    image = table[np.rint(t * (LUT_SIZE - 1)).astype(np.intp)]
    if valid_mask is not None:
        mask = np.asarray(valid_mask, dtype=bool).reshape(d.shape)
        image[~mask] = INVALID_COLOR
    return image


def render_depth(
    depth,
    min_m: float,
    max_m: float,
    colormap: Union[str, np.ndarray] = "plasma_reversed",
    out_path: Optional[Union[str, Path]] = None,
    valid_mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Colorize a depth map and optionally write it as PNG.

    ``depth`` may be a DepthMap; its mask is used when none is given.
    """
    values = getattr(depth, "values", depth)
    if valid_mask is None:
        valid_mask = getattr(depth, "valid_mask", None)
    image = colorize(values, min_m, max_m, colormap, valid_mask)
    if out_path is not None:
        try:
            write_rgb(out_path, image)
        except Exception as e:
            logger.error(f"Error writing depth render {out_path}: {str(e)}")
            raise
    return image
