"""Dataset manifests, sample loading and the synthetic fixture generator."""
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator

from ..augment import DepthSample, DepthUnit
from ..errors import DecodeError, InvalidInputError, ManifestError
from .imaging import read_depth, read_rgb, resize_depth, resize_rgb, write_depth, write_rgb

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_VERSION = 1

# rgb and depth may differ in size only by a resize, not by framing
ASPECT_TOLERANCE = 0.02


class DepthEncoding(str, Enum):
    PNG16_MM = "png16_mm"
    RAW_F32_M = "raw_f32_m"

    @property
    def suffix(self) -> str:
        return ".png" if self is DepthEncoding.PNG16_MM else ".npy"


class CropRect(BaseModel):
    """Evaluation window as fractions of the map extents"""

    model_config = ConfigDict(frozen=True)

    top: float = Field(..., ge=0.0, le=1.0)
    left: float = Field(..., ge=0.0, le=1.0)
    bottom: float = Field(..., ge=0.0, le=1.0)
    right: float = Field(..., ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.bottom <= self.top or self.right <= self.left:
            raise ValueError("crop needs top < bottom and left < right")
        return self

    @classmethod
    def parse(cls, text: str) -> "CropRect":
        """``top,left,bottom,right`` fractions, or the name ``garg``"""
        if text.strip().lower() == "garg":
            return cls.garg()
        parts = text.split(",")
        if len(parts) != 4:
            raise InvalidInputError(f"crop must be 'top,left,bottom,right', got '{text}'")
        try:
            top, left, bottom, right = (float(p) for p in parts)
            return cls(top=top, left=left, bottom=bottom, right=right)
        except (ValueError, ValidationError) as e:
            raise InvalidInputError(f"invalid crop '{text}': {e}") from e

    @classmethod
    def garg(cls) -> "CropRect":
        """Standard outdoor LiDAR evaluation window"""
        return cls(top=0.40810811, left=0.03594771, bottom=0.99189189, right=0.96405229)

    def to_mask(self, height: int, width: int) -> np.ndarray:
        mask = np.zeros((height, width), dtype=bool)
        r0, r1 = int(self.top * height), int(np.ceil(self.bottom * height))
        c0, c1 = int(self.left * width), int(np.ceil(self.right * width))
        mask[r0:max(r1, r0 + 1), c0:max(c1, c0 + 1)] = True
        return mask


class ManifestEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    rgb: str
    depth: str


class DatasetManifest(BaseModel):
    version: int = MANIFEST_VERSION
    depth_encoding: DepthEncoding = DepthEncoding.PNG16_MM
    max_depth_m: float = Field(10.0, gt=0)
    unit: DepthUnit = DepthUnit.INDOOR_CM
    eval_crop: Optional[CropRect] = None
    entries: List[ManifestEntry] = Field(default_factory=list)

    _root: Path = PrivateAttr(default_factory=Path)

    @property
    def root(self) -> Path:
        return self._root

    def with_root(self, root: PathLike) -> "DatasetManifest":
        self._root = Path(root)
        return self

    def resolve(self, relative: str) -> Path:
        p = Path(relative)
        return p if p.is_absolute() else self._root / p

    def __len__(self) -> int:
        return len(self.entries)

    def save(self, path: PathLike) -> Path:
        path = Path(path)
        data = self.model_dump(mode="json", exclude_none=True)
        with open(path, "w") as f:
            yaml.safe_dump(data, f, sort_keys=False)
        return path


def load_manifest(path: PathLike) -> DatasetManifest:
    path = Path(path)
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}")
    except yaml.YAMLError as e:
        logger.error(f"Error parsing manifest {path}: {str(e)}")
        raise ManifestError(f"malformed manifest {path}: {e}") from e
    if not isinstance(data, dict):
        raise ManifestError(f"manifest {path} must be a mapping")
    if data.get("version", MANIFEST_VERSION) != MANIFEST_VERSION:
        raise ManifestError(f"manifest {path} has unsupported version {data.get('version')}")
    try:
        manifest = DatasetManifest(**data).with_root(path.parent)
    except ValidationError as e:
        raise ManifestError(f"invalid manifest {path}: {e}") from e
    missing = [
        str(manifest.resolve(p))
        for entry in manifest.entries
        for p in (entry.rgb, entry.depth)
        if not manifest.resolve(p).exists()
    ]
    if missing:
        raise ManifestError(f"manifest {path} references missing files: {', '.join(missing[:5])}")
    return manifest


def _aspect(h: int, w: int) -> float:
    return w / h


def load_sample(
    entry: ManifestEntry,
    manifest: DatasetManifest,
    input_size: Optional[Tuple[int, int]] = None,
) -> DepthSample:
    """Decode one pair; rgb is resized bilinearly to ``input_size`` (H, W).

    Depth stays at its native resolution; evaluation resizes it to the
    prediction grid with nearest neighbour.
    """
    rgb = read_rgb(manifest.resolve(entry.rgb))
    depth = read_depth(manifest.resolve(entry.depth), manifest.depth_encoding.value)
    rh, rw = rgb.shape[2:]
    dh, dw = depth.shape
    if abs(_aspect(rh, rw) / _aspect(dh, dw) - 1.0) > ASPECT_TOLERANCE:
        raise DecodeError(f"rgb {rw}x{rh} and depth {dw}x{dh} of '{entry.rgb}' have different aspect ratios")
    if input_size is not None:
        rgb = resize_rgb(rgb, input_size)
    # the sample keeps a shared grid; depth follows rgb with nearest neighbour
    depth = resize_depth(depth, rgb.shape[2:])
    return DepthSample(rgb, depth[None, None], manifest.unit, manifest.max_depth_m)


def iter_samples(
    manifest: DatasetManifest, input_size: Optional[Tuple[int, int]] = None
) -> Iterator[Tuple[int, Union[DepthSample, Exception]]]:
    """Samples in manifest order; decode failures are yielded, not raised"""
    for index, entry in enumerate(manifest.entries):
        try:
            yield index, load_sample(entry, manifest, input_size)
        except (DecodeError, OSError) as e:
            logger.warning(f"Skipping sample {index} ({entry.rgb}): {str(e)}")
            yield index, e


@dataclass(frozen=True)
class SceneSpec:
    """A fronto-parallel plane, a horizontal ramp, or a box in front of a plane"""

    kind: str = "plane"
    near_m: float = 2.0
    far_m: float = 2.0

    def depth(self, height: int, width: int) -> np.ndarray:
        if self.kind == "plane":
            d = np.full((height, width), self.far_m)
        elif self.kind == "ramp":
            d = np.tile(np.linspace(self.near_m, self.far_m, width), (height, 1))
        elif self.kind == "box":
            d = np.full((height, width), self.far_m)
            d[height // 4:3 * height // 4, width // 4:3 * width // 4] = self.near_m
        else:
            raise InvalidInputError(f"unknown scene kind '{self.kind}'")
        return np.round(d, 3)

    def rgb(self, depth: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Shading that darkens with distance plus a little seeded texture"""
        far = max(self.far_m, self.near_m, 1e-3)
        shade = 1.0 - 0.8 * depth / far
        tint = rng.uniform(0.6, 1.0, size=3)
        noise = rng.uniform(-0.03, 0.03, size=(3,) + depth.shape)
        rgb = np.clip(shade[None] * tint[:, None, None] + noise, 0.0, 1.0)
        return rgb[None].astype(np.float32)


def random_scene(rng: np.random.Generator, max_depth: float) -> SceneSpec:
    kind = ("plane", "ramp", "box")[int(rng.integers(3))]
    hi = min(max_depth, 10.0)
    near = round(float(rng.uniform(0.5, 0.5 * hi)), 3)
    far = round(float(rng.uniform(near + 0.5, hi)), 3)
    if kind == "plane":
        near = far
    return SceneSpec(kind, near, far)


def generate_synthetic_dataset(
    n: int,
    seed: int,
    out_dir: PathLike,
    size: Tuple[int, int] = (192, 256),
    encoding: Union[str, DepthEncoding] = DepthEncoding.PNG16_MM,
    unit: Union[str, DepthUnit] = DepthUnit.INDOOR_CM,
    max_depth: float = 10.0,
    scenes: Optional[Sequence[SceneSpec]] = None,
) -> DatasetManifest:
    """Write ``n`` rgb/depth pairs plus ``manifest.yaml``; deterministic under ``seed``"""
    if n < 1:
        raise InvalidInputError(f"dataset needs at least one sample, got {n}")
    if scenes is not None and len(scenes) != n:
        raise InvalidInputError(f"got {len(scenes)} scenes for {n} samples")
    encoding = DepthEncoding(encoding)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logger.error(f"Error creating dataset directory {out_dir}: {str(e)}")
        raise
    rng = np.random.default_rng(seed)
    h, w = size
    entries = []
    for i in range(n):
        scene = scenes[i] if scenes is not None else random_scene(rng, max_depth)
        depth = scene.depth(h, w)
        rgb = scene.rgb(depth, rng)
        rgb_name = f"{i:05d}_rgb.png"
        depth_name = f"{i:05d}_depth{encoding.suffix}"
        write_rgb(out_dir / rgb_name, rgb)
        write_depth(out_dir / depth_name, depth, encoding.value)
        entries.append(ManifestEntry(rgb=rgb_name, depth=depth_name))
    manifest = DatasetManifest(
        depth_encoding=encoding,
        max_depth_m=max_depth,
        unit=DepthUnit(unit),
        entries=entries,
    ).with_root(out_dir)
    manifest.save(out_dir / "manifest.yaml")
    logger.info("Generated synthetic dataset", extra={"extra": {"dir": str(out_dir), "samples": n, "seed": seed}})
    return manifest
