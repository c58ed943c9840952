"""Parameter and MAC accounting, plus single-image latency benchmarking.

Counts come from the closed forms attached to each planned layer, so they
need no forward pass. MACs are multiplications only, at the padded working
size; activations, normalization and softmax are not counted.
"""
import hashlib
import logging
import time
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from tqdm import tqdm

from . import kernels
from .errors import InvalidInputError
from .model import MeterModel, ModelConfig, Variant, build, plan_layers

logger = logging.getLogger(__name__)

BYTES_PER_ELEMENT = 4

REFERENCE_PARAMS = {Variant.S: 3.29e6, Variant.XS: 1.45e6, Variant.XXS: 0.71e6}

# keyed by (H, W) of the input image
REFERENCE_MACS = {
    (Variant.S, (192, 256)): 0.975e9,
    (Variant.XS, (192, 256)): 0.579e9,
    (Variant.XXS, (192, 256)): 0.186e9,
    (Variant.S, (192, 636)): 2.432e9,
    (Variant.XS, (192, 636)): 1.444e9,
    (Variant.XXS, (192, 636)): 0.464e9,
}

ModelLike = Union[MeterModel, ModelConfig]


class LayerProfile(BaseModel):
    name: str
    kind: str
    params: int = Field(..., ge=0)
    macs: int = Field(..., ge=0)
    output_shape: Tuple[int, ...]


class LatencyStats(BaseModel):
    mean_ms: float = Field(..., gt=0)
    std_ms: float = Field(..., ge=0)
    iterations: int = Field(..., ge=1)
    warmup: int = Field(..., ge=0)
    threads: int = Field(..., ge=1)
    source: str = "synthetic"
    output_sha256: Optional[str] = None
    outputs_consistent: bool = True


class ProfileReport(BaseModel):
    variant: Variant
    input_size: Tuple[int, int]
    working_size: Tuple[int, int]
    params_total: int
    macs_total: int
    per_layer: List[LayerProfile]
    bytes_weights: int
    bytes_activations: int
    latency: Optional[LatencyStats] = None
    fps: Optional[float] = None

    @model_validator(mode="after")
    def _consistent(self):
        if self.params_total != sum(layer.params for layer in self.per_layer):
            raise ValueError("params_total must equal the per-layer sum")
        if self.macs_total != sum(layer.macs for layer in self.per_layer):
            raise ValueError("macs_total must equal the per-layer sum")
        if (self.latency is None) != (self.fps is None):
            raise ValueError("fps and latency are reported together")
        if self.latency is not None and not np.isclose(self.fps, 1000.0 / self.latency.mean_ms, rtol=1e-12):
            raise ValueError("fps must equal 1000 / mean latency in ms")
        return self

    def reference_deviation(self) -> Dict[str, float]:
        """Relative gaps to the published figures, where they exist"""
        out = {}
        ref = REFERENCE_PARAMS.get(self.variant)
        if ref:
            out["params"] = self.params_total / ref - 1.0
        ref = REFERENCE_MACS.get((self.variant, tuple(self.input_size)))
        if ref:
            out["macs"] = self.macs_total / ref - 1.0
        return out

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([layer.model_dump() for layer in self.per_layer])
        frame["output_shape"] = frame["output_shape"].map(lambda s: "x".join(str(d) for d in s))
        return frame

    def to_table(self) -> str:
        return self.to_frame().to_string(index=False)

    def to_lines(self, per_layer: bool = True) -> List[str]:
        h, w = self.input_size
        wh, ww = self.working_size
        lines = [
            f"variant: {self.variant.value}",
            f"input_size: {w}x{h}",
            f"working_size: {ww}x{wh}",
        ]
        if per_layer:
            width = max(len(layer.name) for layer in self.per_layer)
            for layer in self.per_layer:
                shape = "x".join(str(d) for d in layer.output_shape)
                lines.append(f"layer: {layer.name:<{width}} {layer.kind:<11} {layer.params:>9} {layer.macs:>12} {shape}")
        lines += [
            f"params_total: {self.params_total}",
            f"params_m: {self.params_total / 1e6:.3f}",
            f"macs_total: {self.macs_total}",
            f"macs_g: {self.macs_total / 1e9:.4f}",
            f"bytes_weights: {self.bytes_weights}",
            f"bytes_activations: {self.bytes_activations}",
        ]
        for key, value in self.reference_deviation().items():
            lines.append(f"{key}_reference_deviation: {value:+.4f}")
        if self.latency is not None:
            lat = self.latency
            lines += [
                f"latency_mean_ms: {lat.mean_ms:.3f}",
                f"latency_std_ms: {lat.std_ms:.3f}",
                f"fps: {self.fps:.3f}",
                f"iterations: {lat.iterations}",
                f"warmup: {lat.warmup}",
                f"threads: {lat.threads}",
                f"source: {lat.source}",
                f"outputs_consistent: {str(lat.outputs_consistent).lower()}",
            ]
            if lat.output_sha256:
                lines.append(f"output_sha256: {lat.output_sha256}")
        return lines


def _config_of(model: ModelLike) -> ModelConfig:
    return model.config if isinstance(model, MeterModel) else model


def profile_layers(model: ModelLike, input_size: Optional[Tuple[int, int]] = None) -> ProfileReport:
    """Per-layer params, MACs and output shapes at ``input_size`` (H, W)"""
    config = _config_of(model)
    if input_size is not None:
        config = config.with_input_size(*input_size)
    config.check()
    wh, ww = config.working_size
    rows = []
    stored = 0
    activations = 0
    for spec in plan_layers(config):
        shape = spec.output_shape(wh, ww)
        rows.append(LayerProfile(name=spec.name, kind=spec.kind, params=spec.params, macs=spec.macs(wh, ww), output_shape=shape))
        stored += sum(int(np.prod(s)) for s in spec.weight_shapes().values())
        activations += int(np.prod(shape))
    return ProfileReport(
        variant=config.variant,
        input_size=tuple(config.input_size),
        working_size=(wh, ww),
        params_total=sum(r.params for r in rows),
        macs_total=sum(r.macs for r in rows),
        per_layer=rows,
        bytes_weights=BYTES_PER_ELEMENT * stored,
        bytes_activations=BYTES_PER_ELEMENT * activations,
    )


def count_params(model: ModelLike) -> ProfileReport:
    """Trainable parameters: weights, biases, normalization affine terms"""
    return profile_layers(model)


def count_macs(model: ModelLike, input_size: Tuple[int, int]) -> ProfileReport:
    return profile_layers(model, input_size)


def _digest(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype=np.float32).tobytes()).hexdigest()


def bench_latency(
    model: ModelLike,
    input_size: Optional[Tuple[int, int]] = None,
    iterations: int = 20,
    warmup: int = 3,
    threads: int = 1,
    seed: int = 42,
    images: Optional[Iterable[np.ndarray]] = None,
    metrics=None,
    progress: bool = False,
) -> ProfileReport:
    """Wall-clock single-image forward passes.

    With ``images`` every image is timed once and ``iterations`` is ignored;
    otherwise one seeded synthetic image is timed ``iterations`` times and
    the outputs are hashed to confirm they never change.
    """
    if iterations < 1:
        raise InvalidInputError(f"iterations must be >= 1, got {iterations}")
    if warmup < 0:
        raise InvalidInputError(f"warmup must be >= 0, got {warmup}")
    net = model if isinstance(model, MeterModel) else build(model, seed)
    if input_size is not None and tuple(input_size) != tuple(net.config.input_size):
        net = net.resized(*input_size)
    h, w = net.config.input_size
    variant = net.variant.value

    previous = kernels.get_num_threads()
    kernels.set_num_threads(threads)
    try:
        if images is None:
            rng = np.random.default_rng(seed)
            image = rng.random((1, 3, h, w), dtype=np.float32)
            inputs: List[np.ndarray] = [image] * iterations
            source = "synthetic"
        else:
            inputs = list(images)
            if not inputs:
                raise InvalidInputError("benchmark dataset holds no images")
            source = "dataset"
        for _ in range(warmup):
            net.predict(inputs[0])
        timings = []
        digests = set()
        for image in tqdm(inputs, desc=f"bench {variant}", unit="it", disable=not progress):
            start = time.perf_counter()
            try:
                out = net.predict(image)
            except Exception:
                if metrics is not None:
                    metrics.record_forward(variant, start, failed=True)
                raise
            elapsed = time.perf_counter() - start
            if metrics is not None:
                metrics.observe(variant, elapsed)
            timings.append(elapsed * 1000.0)
            if source == "synthetic":
                digests.add(_digest(out))
    finally:
        kernels.set_num_threads(previous)

    times = np.asarray(timings, dtype=np.float64)
    mean_ms = float(times.mean())
    std_ms = float(times.std(ddof=1)) if len(times) > 1 else 0.0
    latency = LatencyStats(
        mean_ms=mean_ms,
        std_ms=std_ms,
        iterations=len(times),
        warmup=warmup,
        threads=threads,
        source=source,
        output_sha256=next(iter(digests)) if len(digests) == 1 else None,
        outputs_consistent=len(digests) <= 1,
    )
    if not latency.outputs_consistent:
        logger.warning(f"Benchmark outputs changed across iterations ({len(digests)} distinct)")
    counts = profile_layers(net)
    if metrics is not None:
        metrics.set_model_size(variant, counts.params_total, counts.macs_total)
    report = counts.model_copy(update={"latency": latency, "fps": 1000.0 / mean_ms})
    logger.info(
        "Benchmark finished",
        extra={"extra": {"variant": variant, "mean_ms": round(mean_ms, 3), "iterations": len(times), "threads": threads}},
    )
    return report


def compare_latency(small: ProfileReport, large: ProfileReport) -> Optional[str]:
    """Soft check that the variant with fewer MACs is not slower.

    Returns a warning message, or None when the ordering holds.
    """
    if small.fps is None or large.fps is None:
        raise InvalidInputError("both reports need latency figures")
    if small.macs_total > large.macs_total:
        small, large = large, small
    if small.fps >= large.fps:
        return None
    message = (
        f"{small.variant.value} ran at {small.fps:.2f} fps, slower than {large.variant.value} at {large.fps:.2f} fps "
        f"despite {large.macs_total / max(small.macs_total, 1):.1f}x fewer MACs"
    )
    logger.warning(message)
    return message
