import logging
from pathlib import Path
from typing import Tuple, Union

import cv2
import numpy as np

from ..errors import DecodeError, InvalidInputError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# center-aligned nearest neighbour where the OpenCV build provides it
NEAREST = getattr(cv2, "INTER_NEAREST_EXACT", cv2.INTER_NEAREST)

PNG16_SCALE = 1000.0


def read_rgb(path: PathLike) -> np.ndarray:
    """Decode an 8- or 16-bit image into a (1, 3, H, W) float32 tensor in [0, 1]"""
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise DecodeError(f"cannot decode image {path}")
    return _to_rgb_tensor(image, str(path))


def decode_rgb(data: bytes, source: str = "<bytes>") -> np.ndarray:
    buffer = np.frombuffer(data, dtype=np.uint8)
    image = cv2.imdecode(buffer, cv2.IMREAD_UNCHANGED) if buffer.size else None
    if image is None:
        raise DecodeError(f"cannot decode image {source}")
    return _to_rgb_tensor(image, source)


def _to_rgb_tensor(image: np.ndarray, source: str) -> np.ndarray:
    if image.size == 0 or min(image.shape[:2]) == 0:
        raise DecodeError(f"image {source} has a zero dimension")
    if image.ndim == 2:
        image = np.stack([image] * 3, axis=-1)
    elif image.shape[2] == 4:
        image = cv2.cvtColor(image, cv2.COLOR_BGRA2RGB)
    elif image.shape[2] == 3:
        image = cv2.cvtColor(image, cv2.COLOR_BGR2RGB)
    else:
        raise DecodeError(f"image {source} has {image.shape[2]} channels")
    if image.dtype == np.uint8:
        scale = 255.0
    elif image.dtype == np.uint16:
        scale = 65535.0
    else:
        raise DecodeError(f"image {source} has unsupported sample type {image.dtype}")
    rgb = image.astype(np.float32) / np.float32(scale)
    return np.ascontiguousarray(rgb.transpose(2, 0, 1)[None])


def rgb_to_uint8(rgb: np.ndarray) -> np.ndarray:
    """(1, 3, H, W) or (H, W, 3) floats in [0, 1] to an (H, W, 3) uint8 image"""
    arr = np.asarray(rgb)
    if arr.ndim == 4:
        arr = arr[0].transpose(1, 2, 0)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    return arr


def write_rgb(path: PathLike, rgb: np.ndarray) -> Path:
    path = Path(path)
    image = cv2.cvtColor(rgb_to_uint8(rgb), cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), image):
        raise OSError(f"cannot write image {path}")
    return path


def encode_png(rgb: np.ndarray) -> bytes:
    ok, buffer = cv2.imencode(".png", cv2.cvtColor(rgb_to_uint8(rgb), cv2.COLOR_RGB2BGR))
    if not ok:
        raise DecodeError("PNG encoding failed")
    return buffer.tobytes()


def read_depth(path: PathLike, encoding: str) -> np.ndarray:
    """Decode a depth file into an (H, W) float32 map in meters; 0 marks invalid"""
    path = Path(path)
    if encoding == "png16_mm":
        raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise DecodeError(f"cannot decode depth image {path}")
        if raw.ndim != 2 or raw.dtype != np.uint16:
            raise DecodeError(f"depth image {path} must be single-channel 16-bit, got {raw.dtype} {raw.shape}")
        depth = raw.astype(np.float32) / np.float32(PNG16_SCALE)
    elif encoding == "raw_f32_m":
        try:
            raw = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as e:
            raise DecodeError(f"cannot decode depth array {path}: {e}") from e
        if raw.ndim != 2:
            raise DecodeError(f"depth array {path} must be 2-D, got shape {raw.shape}")
        depth = raw.astype(np.float32)
    else:
        raise InvalidInputError(f"unknown depth encoding '{encoding}'")
    if depth.size == 0 or min(depth.shape) == 0:
        raise DecodeError(f"depth map {path} has a zero dimension")
    if not np.all(np.isfinite(depth)) or np.any(depth < 0):
        raise DecodeError(f"depth map {path} holds negative or non-finite values")
    return depth


def write_depth(path: PathLike, depth_m: np.ndarray, encoding: str) -> Path:
    path = Path(path)
    depth = np.asarray(depth_m, dtype=np.float64)
    if encoding == "png16_mm":
        mm = np.clip(np.rint(depth * PNG16_SCALE), 0, np.iinfo(np.uint16).max).astype(np.uint16)
        if not cv2.imwrite(str(path), mm):
            raise OSError(f"cannot write depth image {path}")
    elif encoding == "raw_f32_m":
        with open(path, "wb") as f:
            np.save(f, depth.astype(np.float32), allow_pickle=False)
    else:
        raise InvalidInputError(f"unknown depth encoding '{encoding}'")
    return path


def resize_rgb(rgb: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """Bilinear resize of a (1, 3, h, w) tensor to (H, W)"""
    h, w = size
    if rgb.shape[2:] == (h, w):
        return rgb
    image = rgb[0].transpose(1, 2, 0).astype(np.float32)
    resized = cv2.resize(image, (w, h), interpolation=cv2.INTER_LINEAR)
    return np.ascontiguousarray(np.clip(resized, 0.0, 1.0).transpose(2, 0, 1)[None])


def resize_depth(depth: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resize over the last two axes; never invents depths"""
    h, w = size
    arr = np.asarray(depth, dtype=np.float32)
    if arr.shape[-2:] == (h, w):
        return arr
    lead = arr.shape[:-2]
    flat = arr.reshape((-1,) + arr.shape[-2:])
    out = np.stack([cv2.resize(m, (w, h), interpolation=NEAREST) for m in flat])
    return out.reshape(lead + (h, w))
