from pydantic import BaseModel, Field
from typing import Optional, Tuple
from datetime import datetime, timezone


def _now() -> datetime:
    return datetime.now(timezone.utc)


class HealthResponse(BaseModel):
    status: str = "healthy"
    variant: str
    input_size: str = Field(..., description="Model input size as WxH")
    params: int
    version: str
    timestamp: datetime = Field(default_factory=_now)


class DepthStatsResponse(BaseModel):
    variant: str
    input_size: str = Field(..., description="Size the upload was resized to, WxH")
    output_size: str = Field(..., description="Depth map size, WxH")
    min_m: float
    max_m: float
    mean_m: float
    latency_ms: float = Field(..., ge=0.0)
    depth_range: Tuple[float, float]


class ErrorResponse(BaseModel):
    detail: str
    code: Optional[str] = None
    timestamp: datetime = Field(default_factory=_now)
