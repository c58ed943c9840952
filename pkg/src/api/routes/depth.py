from fastapi import APIRouter, File, Query, Request, UploadFile
from fastapi.responses import Response
from starlette.concurrency import run_in_threadpool
from typing import Optional, Tuple
from loguru import logger

from ..schemas.base import DepthStatsResponse
from ...model import DepthMap, MeterModel
from ...persistence.imaging import decode_rgb, encode_png, resize_rgb
from ...persistence.render import COLORMAPS, render_depth
from ...reporting import format_size
from ...errors import InvalidInputError

router = APIRouter()


def _predict(request: Request, data: bytes, filename: str) -> Tuple[MeterModel, DepthMap, float]:
    model: MeterModel = request.app.state.model
    metrics = request.app.state.metrics
    rgb = resize_rgb(decode_rgb(data, filename), model.config.input_size)
    start = metrics.track_forward()
    try:
        depth = model.forward(rgb)
    except Exception:
        metrics.record_forward(model.variant.value, start, failed=True)
        raise
    elapsed = metrics.record_forward(model.variant.value, start)
    return model, depth, elapsed * 1000.0


@router.post("/infer")
async def infer_depth(
    request: Request,
    image: UploadFile = File(..., description="RGB image, any size; resized to the model input"),
    colormap: Optional[str] = Query(default=None, description="plasma_reversed or grayscale"),
):
    """
    Predict depth for an uploaded image and return it as a colormapped PNG
    """
    name = colormap or request.app.state.colormap
    if name not in COLORMAPS:
        raise InvalidInputError(f"unknown colormap '{name}', expected one of {COLORMAPS}")
    data = await image.read()
    model, depth, latency_ms = await run_in_threadpool(_predict, request, data, image.filename or "<upload>")
    lo, hi = model.config.depth_range
    png = encode_png(render_depth(depth, lo, hi, name))
    stats = depth.stats()
    logger.info(f"Served depth for {image.filename} in {latency_ms:.1f} ms")
    return Response(
        content=png,
        media_type="image/png",
        headers={
            "X-Depth-Min": f"{stats['min_m']:.6f}",
            "X-Depth-Max": f"{stats['max_m']:.6f}",
            "X-Depth-Mean": f"{stats['mean_m']:.6f}",
            "X-Latency-Ms": f"{latency_ms:.3f}",
        },
    )


@router.post("/stats", response_model=DepthStatsResponse)
async def depth_stats(
    request: Request,
    image: UploadFile = File(..., description="RGB image, any size; resized to the model input"),
):
    """
    Predict depth for an uploaded image and summarize it
    """
    data = await image.read()
    model, depth, latency_ms = await run_in_threadpool(_predict, request, data, image.filename or "<upload>")
    stats = depth.stats()
    return DepthStatsResponse(
        variant=model.variant.value,
        input_size=format_size(model.config.input_size),
        output_size=format_size(depth.shape[-2:]),
        latency_ms=latency_ms,
        depth_range=model.config.depth_range,
        **stats,
    )
