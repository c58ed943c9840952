from fastapi import APIRouter, Query
from typing import Optional

from ...model import ModelConfig, Variant
from ...profiler import ProfileReport, count_macs
from ...reporting import parse_size

router = APIRouter()


@router.get("/{variant}", response_model=ProfileReport)
async def profile_variant(
    variant: str,
    input_size: Optional[str] = Query(default="256x192", description="Input size as WxH"),
):
    """
    Closed-form parameter and MAC counts for a variant preset
    """
    config = ModelConfig.preset(Variant.parse(variant))
    return count_macs(config, parse_size(input_size))
