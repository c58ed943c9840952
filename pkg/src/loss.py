"""Balanced depth loss.

total = l_depth + lambda1 * l_grad + lambda2 * l_norm + lambda3 * l_ssim

Each term returns its value and, when asked, the gradient with respect to
the prediction. Arithmetic is float64. Maps may carry leading batch axes;
the last two axes are (H, W).
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field

from .errors import DimensionError, InvalidInputError

logger = logging.getLogger(__name__)

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])

# lambda2 = lambda3 per depth unit
UNIT_SCALES = {"m": 1.0, "dm": 10.0, "cm": 100.0}

ABLATIONS = ("depth", "depth_grad", "depth_grad_norm", "full")

GRAD_MODES = ("literal", "abs")


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda1: float = Field(0.5, ge=0.0, description="Edge term scale")
    lambda2: float = Field(1.0, ge=0.0, description="Normal term scale")
    lambda3: float = Field(1.0, ge=0.0, description="SSIM term scale")

    @classmethod
    def for_unit(cls, unit: str = "m", lambda1: float = 0.5) -> "LossWeights":
        if unit not in UNIT_SCALES:
            raise InvalidInputError(f"depth unit must be one of {sorted(UNIT_SCALES)}, got '{unit}'")
        scale = UNIT_SCALES[unit]
        return cls(lambda1=lambda1, lambda2=scale, lambda3=scale)

    @classmethod
    def ablation(cls, name: str, unit: str = "m", lambda1: float = 0.5) -> "LossWeights":
        """Incremental term sets: depth, +grad, +norm, +ssim"""
        if name not in ABLATIONS:
            raise InvalidInputError(f"ablation must be one of {ABLATIONS}, got '{name}'")
        full = cls.for_unit(unit, lambda1)
        stage = ABLATIONS.index(name)
        return cls(
            lambda1=full.lambda1 if stage >= 1 else 0.0,
            lambda2=full.lambda2 if stage >= 2 else 0.0,
            lambda3=full.lambda3 if stage >= 3 else 0.0,
        )


class LossTerm(NamedTuple):
    value: float
    gradient: Optional[np.ndarray]


@dataclass(frozen=True)
class LossReport:
    total: float
    l_depth: float
    l_grad: float
    l_norm: float
    l_ssim: float
    gradient: Optional[np.ndarray] = None

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "l_depth": self.l_depth,
            "l_grad": self.l_grad,
            "l_norm": self.l_norm,
            "l_ssim": self.l_ssim,
        }


def _prepare(y, y_hat, min_extent: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y, dtype=np.float64)
    b = np.asarray(y_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError("ground truth and prediction differ in shape", expected=a.shape, actual=b.shape)
    if a.ndim < 2:
        raise DimensionError("depth maps need at least two axes (H, W)", actual=a.shape)
    if a.size == 0:
        raise InvalidInputError("empty depth map")
    if a.shape[-2] < min_extent or a.shape[-1] < min_extent:
        raise InvalidInputError(f"depth map {a.shape[-2]}x{a.shape[-1]} is smaller than {min_extent}x{min_extent}")
    return a, b


def _pad_width(ndim: int):
    return [(0, 0)] * (ndim - 2) + [(1, 1), (1, 1)]


class SobelOperator:
    """3x3 Sobel cross-correlation with replicate borders, and its adjoint.

    ``adjoint_kernel_x`` exists so a deliberately inconsistent adjoint can be
    injected when exercising the gradient checks.
    """

    def __init__(self, kernel_x: np.ndarray = SOBEL_X, adjoint_kernel_x: Optional[np.ndarray] = None):
        self.kernel_x = np.asarray(kernel_x, dtype=np.float64)
        self.kernel_y = self.kernel_x.T
        adj = self.kernel_x if adjoint_kernel_x is None else np.asarray(adjoint_kernel_x, dtype=np.float64)
        self.adjoint_x = adj
        self.adjoint_y = adj.T

    @staticmethod
    def _correlate(padded: np.ndarray, kernel: np.ndarray) -> np.ndarray:
        h, w = padded.shape[-2] - 2, padded.shape[-1] - 2
        out = np.zeros(padded.shape[:-2] + (h, w))
        for a in range(3):
            for b in range(3):
                if kernel[a, b]:
                    out += kernel[a, b] * padded[..., a:a + h, b:b + w]
        return out

    def __call__(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-2] < 3 or z.shape[-1] < 3:
            raise InvalidInputError(f"Sobel needs maps of at least 3x3, got {z.shape[-2]}x{z.shape[-1]}")
        padded = np.pad(z, _pad_width(z.ndim), mode="edge")
        return self._correlate(padded, self.kernel_x), self._correlate(padded, self.kernel_y)

    def adjoint(self, gx_bar: np.ndarray, gy_bar: np.ndarray) -> np.ndarray:
        """Pull output sensitivities back onto the input map"""
        h, w = gx_bar.shape[-2:]
        padded = np.zeros(gx_bar.shape[:-2] + (h + 2, w + 2))
        for kernel, g in ((self.adjoint_x, gx_bar), (self.adjoint_y, gy_bar)):
            for a in range(3):
                for b in range(3):
                    if kernel[a, b]:
                        padded[..., a:a + h, b:b + w] += kernel[a, b] * g
        z_bar = padded[..., 1:-1, 1:-1].copy()
        # fold the replicated border back onto the edge pixels
        z_bar[..., 0, :] += padded[..., 0, 1:-1]
        z_bar[..., -1, :] += padded[..., -1, 1:-1]
        z_bar[..., :, 0] += padded[..., 1:-1, 0]
        z_bar[..., :, -1] += padded[..., 1:-1, -1]
        z_bar[..., 0, 0] += padded[..., 0, 0]
        z_bar[..., 0, -1] += padded[..., 0, -1]
        z_bar[..., -1, 0] += padded[..., -1, 0]
        z_bar[..., -1, -1] += padded[..., -1, -1]
        return z_bar


DEFAULT_SOBEL = SobelOperator()


def sobel_gradients(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return DEFAULT_SOBEL(z)


def l_depth(y, y_hat, gradient: bool = False) -> LossTerm:
    """Mean absolute depth error"""
    a, b = _prepare(y, y_hat)
    diff = b - a
    value = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.size if gradient else None
    return LossTerm(value, grad)


def l_grad(y, y_hat, gradient: bool = False, mode: str = "literal", sobel: SobelOperator = DEFAULT_SOBEL) -> LossTerm:
    """Mean Sobel response of the absolute error map.

    ``literal`` averages gx + gy as they are; ``abs`` averages |gx| + |gy|.
    """
    if mode not in GRAD_MODES:
        raise InvalidInputError(f"grad mode must be one of {GRAD_MODES}, got '{mode}'")
    a, b = _prepare(y, y_hat, min_extent=3)
    diff = b - a
    err = np.abs(diff)
    gx, gy = sobel(err)
    n = err.size
    if mode == "literal":
        value = float(np.mean(gx + gy))
    else:
        value = float(np.mean(np.abs(gx) + np.abs(gy)))
    if not gradient:
        return LossTerm(value, None)
    if mode == "literal":
        gx_bar = np.full_like(gx, 1.0 / n)
        gy_bar = np.full_like(gy, 1.0 / n)
    else:
        gx_bar = np.sign(gx) / n
        gy_bar = np.sign(gy) / n
    err_bar = sobel.adjoint(gx_bar, gy_bar)
    return LossTerm(value, err_bar * np.sign(diff))


def l_norm(y, y_hat, gradient: bool = False, sobel: SobelOperator = DEFAULT_SOBEL) -> LossTerm:
    """Mean (1 - cosine) between surface normals [-gx, -gy, 1]"""
    a, b = _prepare(y, y_hat, min_extent=3)
    px, py = sobel(b)
    tx, ty = sobel(a)
    dot = px * tx + py * ty + 1.0
    norm_p = np.sqrt(px * px + py * py + 1.0)
    norm_t = np.sqrt(tx * tx + ty * ty + 1.0)
    cos = dot / (norm_p * norm_t)
    value = float(np.mean(1.0 - cos))
    if not gradient:
        return LossTerm(value, None)
    n = cos.size
    scale = norm_p * norm_t
    # normal components are -gx, -gy, so d(1 - cos)/dgx = +dcos/d(-gx)
    gx_bar = (-tx / scale + cos * px / (norm_p * norm_p)) / n
    gy_bar = (-ty / scale + cos * py / (norm_p * norm_p)) / n
    return LossTerm(value, sobel.adjoint(gx_bar, gy_bar))


def _box_mean(x: np.ndarray, window: int) -> np.ndarray:
    return sliding_window_view(x, (window, window), axis=(-2, -1)).mean(axis=(-2, -1))


def _box_mean_adjoint(m: np.ndarray, window: int, shape: Tuple[int, ...]) -> np.ndarray:
    out = np.zeros(shape)
    h, w = m.shape[-2:]
    for i in range(window):
        for j in range(window):
            out[..., i:i + h, j:j + w] += m
    return out / (window * window)


def l_ssim(y, y_hat, dynamic_range: float, gradient: bool = False, window: int = 7) -> LossTerm:
    """1 - mean SSIM over every valid window of a uniform square window"""
    if dynamic_range <= 0:
        raise InvalidInputError(f"dynamic range must be positive, got {dynamic_range}")
    a, b = _prepare(y, y_hat)
    if a.shape[-2] < window or a.shape[-1] < window:
        raise InvalidInputError(f"SSIM window {window}x{window} is larger than the {a.shape[-2]}x{a.shape[-1]} map")
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    # p is the prediction, t the ground truth
    p, t = b, a
    mu_p = _box_mean(p, window)
    mu_t = _box_mean(t, window)
    var_p = _box_mean(p * p, window) - mu_p * mu_p
    var_t = _box_mean(t * t, window) - mu_t * mu_t
    cov = _box_mean(p * t, window) - mu_p * mu_t
    a1 = 2.0 * mu_p * mu_t + c1
    a2 = 2.0 * cov + c2
    b1 = mu_p * mu_p + mu_t * mu_t + c1
    b2 = var_p + var_t + c2
    ssim = (a1 * a2) / (b1 * b2)
    value = float(1.0 - np.mean(ssim))
    if not gradient:
        return LossTerm(value, None)
    count = ssim.size
    alpha = 2.0 * (mu_t * (a2 - a1) / (b1 * b2) + ssim * mu_p * (1.0 / b2 - 1.0 / b1))
    beta = 2.0 * a1 / (b1 * b2)
    gamma = -2.0 * ssim / b2
    d_mean = (
        _box_mean_adjoint(alpha, window, p.shape)
        + t * _box_mean_adjoint(beta, window, p.shape)
        + p * _box_mean_adjoint(gamma, window, p.shape)
    ) / count
    return LossTerm(value, -d_mean)


def balanced_loss(
    y,
    y_hat,
    weights: Optional[LossWeights] = None,
    dynamic_range: float = 10.0,
    gradient: bool = True,
    grad_mode: str = "literal",
    window: int = 7,
    sobel: SobelOperator = DEFAULT_SOBEL,
) -> LossReport:
    weights = weights or LossWeights()
    depth = l_depth(y, y_hat, gradient)
    edge = l_grad(y, y_hat, gradient, mode=grad_mode, sobel=sobel)
    normal = l_norm(y, y_hat, gradient, sobel=sobel)
    structure = l_ssim(y, y_hat, dynamic_range, gradient, window=window)
    total = depth.value + weights.lambda1 * edge.value + weights.lambda2 * normal.value + weights.lambda3 * structure.value
    grad = None
    if gradient:
        grad = (
            depth.gradient
            + weights.lambda1 * edge.gradient
            + weights.lambda2 * normal.gradient
            + weights.lambda3 * structure.gradient
        )
    logger.debug(
        "Balanced loss evaluated",
        extra={"extra": {"total": total, "l_depth": depth.value, "l_grad": edge.value, "l_norm": normal.value, "l_ssim": structure.value}},
    )
    return LossReport(total, depth.value, edge.value, normal.value, structure.value, grad)
