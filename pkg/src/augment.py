"""Training-time augmentation: default geometric/colour policy plus the shifting strategy.

Every draw comes from a per-sample seed split into one stream per transform,
in a fixed order, so plans are reproducible and inspectable before any pixel
is touched.
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import DimensionError, InvalidInputError
from .persistence.imaging import resize_depth, resize_rgb

logger = logging.getLogger(__name__)

VALUE_RANGE = (0.9, 1.1)

# stream index per transform; append new transforms at the end
STREAMS = ("vflip", "mirror", "crop", "channel_swap", "c_shift", "d_shift")

POLICIES = ("none", "default", "shifting")


class DepthUnit(str, Enum):
    INDOOR_CM = "indoor_cm"
    OUTDOOR_DM = "outdoor_dm"


SHIFT_BOUNDS_M = {DepthUnit.INDOOR_CM: 0.10, DepthUnit.OUTDOOR_DM: 1.0}


@dataclass(frozen=True)
class DepthSample:
    """RGB image and metric ground truth sharing one pixel grid"""

    rgb: np.ndarray
    depth: np.ndarray
    unit: DepthUnit = DepthUnit.INDOOR_CM
    max_depth: float = 10.0

    def __post_init__(self):
        rgb = np.ascontiguousarray(self.rgb, dtype=np.float32)
        depth = np.ascontiguousarray(self.depth, dtype=np.float32)
        if rgb.ndim != 4 or rgb.shape[:2] != (1, 3):
            raise DimensionError("rgb must be (1, 3, H, W)", actual=rgb.shape)
        if depth.ndim != 4 or depth.shape[:2] != (1, 1) or depth.shape[2:] != rgb.shape[2:]:
            raise DimensionError("depth must be (1, 1, H, W) on the rgb grid", expected=(1, 1) + rgb.shape[2:], actual=depth.shape)
        if not np.all(np.isfinite(depth)) or np.any(depth < 0):
            raise InvalidInputError("depth must be finite and non-negative")
        if not np.all(np.isfinite(rgb)) or np.any(rgb < 0) or np.any(rgb > 1):
            raise InvalidInputError("rgb must lie in [0, 1]")
        if self.max_depth <= 0:
            raise InvalidInputError(f"max depth must be positive, got {self.max_depth}")
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "unit", DepthUnit(self.unit))

    @property
    def size(self) -> Tuple[int, int]:
        return self.rgb.shape[2], self.rgb.shape[3]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.depth > 0


class AugmentParams(BaseModel):
    """One concrete draw of the shifting-strategy parameters.

    ``shift_bound_m`` overrides the per-unit bound when a policy configures one.
    """

    model_config = ConfigDict(frozen=True)

    beta: float = Field(1.0, ge=VALUE_RANGE[0], le=VALUE_RANGE[1])
    gamma: float = Field(1.0, ge=VALUE_RANGE[0], le=VALUE_RANGE[1])
    eta: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    shift_s: float = 0.0
    unit: DepthUnit = DepthUnit.INDOOR_CM
    apply_prob: float = Field(0.5, ge=0.0, le=1.0)
    seed: int = Field(0, ge=0)
    shift_bound_m: Optional[float] = Field(None, gt=0.0)

    @field_validator("eta")
    @classmethod
    def _eta_in_range(cls, v):
        if any(not (VALUE_RANGE[0] <= e <= VALUE_RANGE[1]) for e in v):
            raise ValueError(f"eta components must lie in {VALUE_RANGE}")
        return v

    @model_validator(mode="after")
    def _shift_in_bound(self):
        bound = SHIFT_BOUNDS_M[self.unit] if self.shift_bound_m is None else self.shift_bound_m
        if abs(self.shift_s) > bound + 1e-12:
            raise ValueError(f"|shift_s| must be <= {bound} m for {self.unit.value}")
        return self


class AugmentPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    apply_prob: float = Field(0.5, ge=0.0, le=1.0)
    value_range: Tuple[float, float] = VALUE_RANGE
    crop_fraction: Tuple[float, float] = (0.75, 1.0)
    shift_bounds_m: Dict[str, float] = Field(default_factory=lambda: {u.value: b for u, b in SHIFT_BOUNDS_M.items()})

    @classmethod
    def from_settings(cls, settings: Dict[str, Any]) -> "AugmentPolicy":
        return cls(**(settings.get("augment") or {}))

    def shift_bound(self, unit: DepthUnit) -> float:
        return float(self.shift_bounds_m.get(DepthUnit(unit).value, SHIFT_BOUNDS_M[DepthUnit(unit)]))


@dataclass(frozen=True)
class CropDraw:
    fraction: float
    top: float
    left: float

    def window(self, height: int, width: int) -> Tuple[int, int, int, int]:
        """(row0, col0, rows, cols) of the crop inside an image"""
        rows = min(height, max(1, int(round(self.fraction * height))))
        cols = min(width, max(1, int(round(self.fraction * width))))
        row0 = min(int(self.top * (height - rows + 1)), height - rows)
        col0 = min(int(self.left * (width - cols + 1)), width - cols)
        return row0, col0, rows, cols


@dataclass(frozen=True)
class DefaultPlan:
    vflip: bool = False
    mirror: bool = False
    crop: Optional[CropDraw] = None
    channel_order: Optional[Tuple[int, int, int]] = None

    @property
    def fired(self) -> Dict[str, bool]:
        return {
            "vflip": self.vflip,
            "mirror": self.mirror,
            "crop": self.crop is not None,
            "channel_swap": self.channel_order is not None,
        }


@dataclass(frozen=True)
class ColorDraw:
    beta: float
    gamma: float
    eta: Tuple[float, float, float]


@dataclass(frozen=True)
class ShiftingPlan:
    default: DefaultPlan
    c_shift: Optional[ColorDraw] = None
    d_shift: Optional[float] = None
    seed: int = 0

    @property
    def fired(self) -> Dict[str, bool]:
        return {**self.default.fired, "c_shift": self.c_shift is not None, "d_shift": self.d_shift is not None}

    def params(self, unit: DepthUnit = DepthUnit.INDOOR_CM, policy: Optional[AugmentPolicy] = None) -> AugmentParams:
        """Drawn values as validated parameters; draws that did not fire come back as identities"""
        policy = policy or AugmentPolicy()
        color = self.c_shift or ColorDraw(1.0, 1.0, (1.0, 1.0, 1.0))
        try:
            return AugmentParams(
                beta=color.beta,
                gamma=color.gamma,
                eta=color.eta,
                shift_s=0.0 if self.d_shift is None else self.d_shift,
                unit=unit,
                apply_prob=policy.apply_prob,
                seed=self.seed,
                shift_bound_m=policy.shift_bound(unit),
            )
        except ValidationError as e:
            raise InvalidInputError(f"shifting plan out of range: {e.errors()[0]['msg']}") from e


def _streams(seed: int) -> List[np.random.Generator]:
    if int(seed) != seed or seed < 0:
        raise InvalidInputError(f"seed must be a non-negative int, got {seed}")
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    return [np.random.default_rng(child) for child in children]


def plan_default(seed: int, policy: Optional[AugmentPolicy] = None) -> DefaultPlan:
    policy = policy or AugmentPolicy()
    p = policy.apply_prob
    vflip_rng, mirror_rng, crop_rng, swap_rng = _streams(seed)[:4]
    vflip = bool(vflip_rng.random() < p)
    mirror = bool(mirror_rng.random() < p)
    crop = None
    if crop_rng.random() < p:
        lo, hi = policy.crop_fraction
        crop = CropDraw(float(crop_rng.uniform(lo, hi)), float(crop_rng.random()), float(crop_rng.random()))
    order = None
    if swap_rng.random() < p:
        order = tuple(int(i) for i in swap_rng.permutation(3))
    return DefaultPlan(vflip, mirror, crop, order)


def plan_shifting(seed: int, unit: DepthUnit = DepthUnit.INDOOR_CM, policy: Optional[AugmentPolicy] = None) -> ShiftingPlan:
    policy = policy or AugmentPolicy()
    p = policy.apply_prob
    lo, hi = policy.value_range
    streams = _streams(seed)
    color_rng, depth_rng = streams[4], streams[5]
    color = None
    if color_rng.random() < p:
        eta = tuple(float(e) for e in color_rng.uniform(lo, hi, size=3))
        color = ColorDraw(float(color_rng.uniform(lo, hi)), float(color_rng.uniform(lo, hi)), eta)
    shift = None
    if depth_rng.random() < p:
        bound = policy.shift_bound(unit)
        shift = float(depth_rng.uniform(-bound, bound))
    return ShiftingPlan(plan_default(seed, policy), color, shift, int(seed))


def _check_factor(name: str, value: float) -> None:
    lo, hi = VALUE_RANGE
    if not (lo <= value <= hi):
        raise InvalidInputError(f"{name}={value} lies outside [{lo}, {hi}]")


def c_shift(rgb: np.ndarray, beta: float, gamma: float, eta: Union[float, Sequence[float]]) -> np.ndarray:
    """Gamma-brightness then per-channel colour scale, clamped to [0, 1]"""
    _check_factor("beta", beta)
    _check_factor("gamma", gamma)
    eta_arr = np.broadcast_to(np.asarray(eta, dtype=np.float64), (3,))
    for i, e in enumerate(eta_arr):
        _check_factor(f"eta[{i}]", float(e))
    x = np.asarray(rgb, dtype=np.float32)
    if x.ndim != 4 or x.shape[1] != 3:
        raise DimensionError("rgb must be (b, 3, H, W)", actual=x.shape)
    x64 = x.astype(np.float64)
    if gamma != 1.0:
        x64 = np.power(x64, gamma)
    out = beta * x64 * eta_arr[None, :, None, None]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def d_shift(
    depth: np.ndarray,
    shift_s: float,
    max_depth: float = np.inf,
    unit: DepthUnit = DepthUnit.INDOOR_CM,
    bound: Optional[float] = None,
) -> np.ndarray:
    """Add one scalar to every valid pixel, clamped to [0, max_depth].

    Zero (invalid) pixels stay zero.
    """
    limit = SHIFT_BOUNDS_M[DepthUnit(unit)] if bound is None else bound
    if abs(shift_s) > limit + 1e-12:
        raise InvalidInputError(f"depth shift {shift_s} m exceeds +/-{limit} m for {DepthUnit(unit).value}")
    d = np.asarray(depth, dtype=np.float32)
    shifted = np.clip(d + np.float32(shift_s), np.float32(0.0), np.float32(max_depth))
    return np.where(d > 0, shifted, np.float32(0.0)).astype(np.float32)


def apply_default(sample: DepthSample, plan: DefaultPlan) -> DepthSample:
    rgb, depth = sample.rgb, sample.depth
    if plan.vflip:
        rgb, depth = rgb[..., ::-1, :], depth[..., ::-1, :]
    if plan.mirror:
        rgb, depth = rgb[..., ::-1], depth[..., ::-1]
    if plan.crop is not None:
        h, w = sample.size
        r0, c0, rows, cols = plan.crop.window(h, w)
        rgb = resize_rgb(np.ascontiguousarray(rgb[..., r0:r0 + rows, c0:c0 + cols]), (h, w))
        depth = resize_depth(np.ascontiguousarray(depth[..., r0:r0 + rows, c0:c0 + cols]), (h, w))
    if plan.channel_order is not None:
        rgb = rgb[:, list(plan.channel_order)]
    return replace(sample, rgb=np.ascontiguousarray(rgb), depth=np.ascontiguousarray(depth))


def apply_shifting(sample: DepthSample, plan: ShiftingPlan, policy: Optional[AugmentPolicy] = None) -> DepthSample:
    params = plan.params(sample.unit, policy)
    out = apply_default(sample, plan.default)
    if plan.c_shift is not None:
        out = replace(out, rgb=c_shift(out.rgb, params.beta, params.gamma, params.eta))
    if plan.d_shift is not None:
        out = replace(out, depth=d_shift(out.depth, params.shift_s, out.max_depth, params.unit, params.shift_bound_m))
    return out


def default_policy(sample: DepthSample, seed: int, policy: Optional[AugmentPolicy] = None) -> DepthSample:
    return apply_default(sample, plan_default(seed, policy))


def shifting_policy(sample: DepthSample, seed: int, policy: Optional[AugmentPolicy] = None) -> DepthSample:
    plan = plan_shifting(seed, sample.unit, policy)
    logger.debug("Shifting plan drawn", extra={"extra": {"seed": seed, **plan.fired}})
    return apply_shifting(sample, plan, policy)


def augment(sample: DepthSample, seed: int, policy_name: str = "shifting", policy: Optional[AugmentPolicy] = None) -> DepthSample:
    """Dispatch to the named policy: none, default or shifting"""
    if policy_name == "none":
        return sample
    if policy_name == "default":
        return default_policy(sample, seed, policy)
    if policy_name == "shifting":
        return shifting_policy(sample, seed, policy)
    raise InvalidInputError(f"augmentation policy must be one of {POLICIES}, got '{policy_name}'")
