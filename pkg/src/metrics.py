"""RMSE, REL and delta1 over masked depth maps, and dataset evaluation."""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Iterable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from tqdm import tqdm

from .errors import DimensionError, EvaluationError, InvalidInputError
from .persistence.dataset import CropRect, DatasetManifest, iter_samples
from .persistence.imaging import resize_depth

logger = logging.getLogger(__name__)

DELTA_THRESHOLD = 1.25


class DepthPredictor(Protocol):
    def predict(self, image: np.ndarray) -> np.ndarray: ...


def _masked(y, y_hat, mask) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise DimensionError("prediction and ground truth differ in shape", expected=y.shape, actual=y_hat.shape)
    if mask is None:
        mask = np.ones(y.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != y.shape:
        raise DimensionError("mask does not match the depth maps", expected=y.shape, actual=mask.shape)
    if not mask.any():
        raise InvalidInputError("mask selects no pixels")
    return y[mask], y_hat[mask]


def rmse(y, y_hat, mask=None) -> float:
    a, b = _masked(y, y_hat, mask)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def rel(y, y_hat, mask=None) -> float:
    a, b = _masked(y, y_hat, mask)
    if np.any(a <= 0):
        raise InvalidInputError("ground truth inside the mask must be positive; mask out invalid depths")
    return float(np.mean(np.abs(a - b) / a))


def delta1(y, y_hat, mask=None, thr: float = DELTA_THRESHOLD) -> float:
    """Fraction of pixels with max(y/y_hat, y_hat/y) strictly below ``thr``"""
    a, b = _masked(y, y_hat, mask)
    if np.any(a <= 0) or np.any(b <= 0):
        raise InvalidInputError("delta1 needs positive depths inside the mask")
    ratio = np.maximum(a / b, b / a)
    return float(np.mean(ratio < thr))


class SampleMetrics(BaseModel):
    index: int
    rmse_m: float
    rel: float
    delta1: float = Field(..., ge=0.0, le=1.0)
    pixels: int = Field(..., gt=0)


class SampleFailure(BaseModel):
    index: int
    error: str


class MetricsReport(BaseModel):
    """Per-image metrics averaged over the dataset"""

    rmse_m: float
    rel: float
    delta1: float = Field(..., ge=0.0, le=1.0)
    pixels_evaluated: int = Field(..., gt=0)
    samples_evaluated: int = Field(..., gt=0)
    delta_threshold: float = DELTA_THRESHOLD
    crop: Optional[CropRect] = None
    per_sample: List[SampleMetrics] = Field(default_factory=list)
    skipped: List[SampleFailure] = Field(default_factory=list)

    def to_lines(self) -> List[str]:
        lines = [
            f"rmse_m: {self.rmse_m:.6f}",
            f"rel: {self.rel:.6f}",
            f"delta1: {self.delta1:.6f}",
            f"pixels_evaluated: {self.pixels_evaluated}",
            f"samples_evaluated: {self.samples_evaluated}",
            f"samples_skipped: {len(self.skipped)}",
        ]
        if self.crop is not None:
            c = self.crop
            lines.append(f"crop: {c.top},{c.left},{c.bottom},{c.right}")
        return lines

    def per_sample_frame(self) -> pd.DataFrame:
        return pd.DataFrame([s.model_dump() for s in self.per_sample], columns=list(SampleMetrics.model_fields))


def sample_metrics(
    index: int,
    gt: np.ndarray,
    pred: np.ndarray,
    crop: Optional[CropRect] = None,
    thr: float = DELTA_THRESHOLD,
) -> SampleMetrics:
    """Metrics for one prediction; ground truth is brought to the prediction grid"""
    pred = np.asarray(pred, dtype=np.float64).reshape(np.asarray(pred).shape[-2:])
    gt = resize_depth(np.asarray(gt, dtype=np.float32).reshape(np.asarray(gt).shape[-2:]), pred.shape).astype(np.float64)
    mask = gt > 0
    if crop is not None:
        mask &= crop.to_mask(*gt.shape)
    if not mask.any():
        raise InvalidInputError(f"sample {index} has no valid depth inside the evaluation area")
    return SampleMetrics(
        index=index,
        rmse_m=rmse(gt, pred, mask),
        rel=rel(gt, pred, mask),
        delta1=delta1(gt, pred, mask, thr),
        pixels=int(mask.sum()),
    )


def aggregate(
    rows: Sequence[SampleMetrics],
    failures: Sequence[SampleFailure] = (),
    crop: Optional[CropRect] = None,
    thr: float = DELTA_THRESHOLD,
) -> MetricsReport:
    if not rows:
        raise EvaluationError(f"no sample could be evaluated ({len(failures)} skipped)")
    rows = sorted(rows, key=lambda r: r.index)
    frame = pd.DataFrame([r.model_dump() for r in rows])
    means = frame[["rmse_m", "rel", "delta1"]].astype(np.float64).mean()
    return MetricsReport(
        rmse_m=float(means["rmse_m"]),
        rel=float(means["rel"]),
        delta1=float(means["delta1"]),
        pixels_evaluated=int(frame["pixels"].sum()),
        samples_evaluated=len(rows),
        delta_threshold=thr,
        crop=crop,
        per_sample=list(rows),
        skipped=sorted(failures, key=lambda f: f.index),
    )


def evaluate_dataset(
    model: DepthPredictor,
    dataset: Union[DatasetManifest, Iterable[Any]],
    crop: Optional[CropRect] = None,
    input_size: Optional[Tuple[int, int]] = None,
    thr: float = DELTA_THRESHOLD,
    workers: int = 1,
    progress: bool = False,
) -> MetricsReport:
    """Predict every sample and average the per-image metrics.

    ``dataset`` is a manifest, or any iterable of DepthSample. Unreadable or
    fully-invalid samples are recorded and skipped.
    """
    if isinstance(dataset, DatasetManifest):
        if len(dataset) == 0:
            raise EvaluationError("dataset manifest has no entries")
        if crop is None:
            crop = dataset.eval_crop
        if input_size is None:
            config = getattr(model, "config", None)
            input_size = tuple(config.input_size) if config is not None else None
        items = iter_samples(dataset, input_size)
    else:
        items = enumerate(dataset)

    rows: List[SampleMetrics] = []
    failures: List[SampleFailure] = []

    def evaluate(item) -> Union[SampleMetrics, SampleFailure]:
        index, sample = item
        if isinstance(sample, Exception):
            return SampleFailure(index=index, error=str(sample))
        try:
            pred = model.predict(sample.rgb)
            return sample_metrics(index, sample.depth, pred, crop, thr)
        except InvalidInputError as e:
            logger.warning(f"Skipping sample {index}: {str(e)}")
            return SampleFailure(index=index, error=str(e))

    items = tqdm(items, desc="eval", unit="img", disable=not progress)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, items))
    else:
        results = [evaluate(item) for item in items]
    for result in results:
        (rows if isinstance(result, SampleMetrics) else failures).append(result)

    report = aggregate(rows, failures, crop, thr)
    logger.info(
        "Evaluated dataset",
        extra={"extra": {"samples": report.samples_evaluated, "skipped": len(failures), "rmse_m": report.rmse_m}},
    )
    return report


class ConstantPredictor:
    """Predicts one depth everywhere at half the input resolution"""

    def __init__(self, depth_m: float):
        if not depth_m > 0:
            raise InvalidInputError(f"constant depth must be positive, got {depth_m}")
        self.depth_m = float(depth_m)

    def predict(self, image: np.ndarray) -> np.ndarray:
        b, _, h, w = np.asarray(image).shape
        return np.full((b, 1, h // 2, w // 2), self.depth_m, dtype=np.float32)

