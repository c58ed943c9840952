"""Versioned weight archive.

Layout: a ``METER-WEIGHTS`` magic line, one JSON header line, then the
concatenated little-endian float32 tensors. Header offsets are relative to
the first payload byte.
"""
import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ..errors import (
    ArchiveError,
    ChecksumError,
    MissingTensorError,
    UnexpectedTensorError,
    UnsupportedVersionError,
    VariantMismatchError,
)
from ..model import MeterModel, ModelConfig, weight_shapes

logger = logging.getLogger(__name__)

MAGIC = b"METER-WEIGHTS"
FORMAT_VERSION = 1
SUPPORTED_VERSIONS = (1,)
DTYPE = np.dtype("<f4")

PathLike = Union[str, Path]


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def save_weights(model: MeterModel, path: PathLike) -> Path:
    """Write every tensor of the model in layer-plan order.

    The file is written to a sibling temporary and moved into place, so a
    reader never sees a partial archive.
    """
    path = Path(path)
    tensors: List[Dict[str, Any]] = []
    blobs: List[bytes] = []
    offset = 0
    for name in model.expected_shapes():
        data = np.ascontiguousarray(model.weights[name], dtype=DTYPE).tobytes()
        tensors.append(
            {
                "name": name,
                "shape": list(model.weights[name].shape),
                "offset": offset,
                "nbytes": len(data),
                "sha256": _digest(data),
            }
        )
        blobs.append(data)
        offset += len(data)
    header = {
        "format_version": FORMAT_VERSION,
        "variant": model.variant.value,
        "activation": model.config.activation.value,
        "config": model.config.model_dump(mode="json"),
        "byte_order": "little",
        "dtype": "float32",
        "tensors": tensors,
    }
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent or Path(".")))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC + b"\n")
            f.write(json.dumps(header, separators=(",", ":")).encode("utf-8") + b"\n")
            for blob in blobs:
                f.write(blob)
        os.replace(tmp, path)
    except Exception as e:
        logger.error(f"Error saving weights to {path}: {str(e)}")
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.info(
        "Saved weights",
        extra={"extra": {"path": str(path), "variant": model.variant.value, "tensors": len(tensors), "bytes": offset}},
    )
    return path


def _split(raw: bytes, path: PathLike):
    first = raw.find(b"\n")
    if first < 0 or raw[:first] != MAGIC:
        raise ArchiveError(f"{path} is not a weight archive (bad magic)")
    second = raw.find(b"\n", first + 1)
    if second < 0:
        raise ArchiveError(f"{path} has no complete header line")
    try:
        header = json.loads(raw[first + 1:second].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArchiveError(f"{path} has a malformed header: {e}") from e
    if not isinstance(header, dict):
        raise ArchiveError(f"{path} header must be a JSON object")
    return header, memoryview(raw)[second + 1:]


def _check_header(header: Dict[str, Any], path: PathLike) -> None:
    version = header.get("format_version")
    if version not in SUPPORTED_VERSIONS:
        raise UnsupportedVersionError(f"{path} has format version {version}, supported: {SUPPORTED_VERSIONS}")
    if header.get("byte_order") != "little" or header.get("dtype") != "float32":
        raise ArchiveError(f"{path} must hold little-endian float32 tensors")
    for key in ("variant", "activation", "tensors"):
        if key not in header:
            raise ArchiveError(f"{path} header lacks '{key}'")


def read_header(path: PathLike) -> Dict[str, Any]:
    """Parse and validate the header without touching the payload"""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.readline() + f.readline()
    header, _ = _split(head, path)
    _check_header(header, path)
    return header


def load_weights(path: PathLike, config: Optional[ModelConfig] = None) -> MeterModel:
    """Read an archive into a model for ``config``.

    Without a config, the one stored in the header is used.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        logger.error(f"Error reading weight archive {path}: {str(e)}")
        raise
    header, payload = _split(raw, path)
    _check_header(header, path)

    if config is None:
        try:
            config = ModelConfig(**header.get("config", {}))
        except Exception as e:
            raise ArchiveError(f"{path} header holds an invalid config: {e}") from e
    if header["variant"] != config.variant.value:
        raise VariantMismatchError(header["variant"], config.variant.value)
    if header["activation"] != config.activation.value:
        raise ArchiveError(
            f"activation mismatch: archive holds {header['activation']}, model config requests {config.activation.value}"
        )

    shapes = weight_shapes(config)

    entries = {t["name"]: t for t in header["tensors"]}
    missing = [n for n in shapes if n not in entries]
    if missing:
        raise MissingTensorError(missing)
    extra = [n for n in entries if n not in shapes]
    if extra:
        raise UnexpectedTensorError(extra)

    weights: Dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        entry = entries[name]
        if tuple(entry["shape"]) != shape:
            raise ArchiveError(f"tensor '{name}' has shape {tuple(entry['shape'])}, model expects {shape}")
        start, nbytes = int(entry["offset"]), int(entry["nbytes"])
        if nbytes != int(np.prod(shape)) * DTYPE.itemsize:
            raise ArchiveError(f"tensor '{name}' declares {nbytes} bytes for shape {shape}")
        block = bytes(payload[start:start + nbytes])
        if len(block) != nbytes:
            raise ChecksumError(name, "truncated payload")
        if _digest(block) != entry["sha256"]:
            raise ChecksumError(name)
        weights[name] = np.frombuffer(block, dtype=DTYPE).astype(np.float32).reshape(shape)

    model = MeterModel(config, weights)
    logger.info("Loaded weights", extra={"extra": {"path": str(path), "variant": config.variant.value}})
    return model
