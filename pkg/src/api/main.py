from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from loguru import logger
from typing import Optional
import uvicorn

from .routes import depth, profile
from .schemas.base import ErrorResponse, HealthResponse
from .. import __version__
from ..errors import MeterError
from ..model import MeterModel
from ..monitoring.metrics_collector import InferenceMetrics
from ..profiler import count_params
from ..reporting import format_size


def create_app(
    model: MeterModel,
    colormap: str = "plasma_reversed",
    metrics: Optional[InferenceMetrics] = None,
) -> FastAPI:
    """Build the HTTP service around one loaded model"""
    app = FastAPI(
        title="METER depth service",
        description="Monocular depth estimation with the METER encoder-decoder",
        version=__version__,
    )

    app.state.model = model
    app.state.colormap = colormap
    app.state.metrics = metrics or InferenceMetrics()
    counts = count_params(model)
    app.state.metrics.set_model_size(model.variant.value, counts.params_total, counts.macs_total)

    # Configure CORS
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    # Include routers
    app.include_router(depth.router, prefix="/api/v1/depth", tags=["Depth"])
    app.include_router(profile.router, prefix="/api/v1/profile", tags=["Profile"])

    @app.exception_handler(MeterError)
    async def meter_exception_handler(request: Request, exc: MeterError):
        logger.warning(f"Rejected {request.url.path}: {exc}")
        return JSONResponse(
            status_code=400,
            content=ErrorResponse(detail=str(exc), code=type(exc).__name__).model_dump(mode="json"),
        )

    @app.exception_handler(Exception)
    async def global_exception_handler(request: Request, exc: Exception):
        logger.error(f"Global exception handler caught: {exc}")
        return JSONResponse(
            status_code=500,
            content=ErrorResponse(detail="Internal server error. Please try again later.").model_dump(mode="json"),
        )

    @app.get("/health", response_model=HealthResponse)
    async def health_check():
        return HealthResponse(
            variant=model.variant.value,
            input_size=format_size(model.config.input_size),
            params=model.param_count,
            version=__version__,
        )

    return app


def serve(app: FastAPI, host: str = "0.0.0.0", port: int = 8000) -> None:
    logger.info(f"Serving on {host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="info")
