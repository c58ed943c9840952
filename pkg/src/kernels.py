"""Dense tensor kernels for the depth network.

Tensors are numpy float32 arrays laid out (batch, channels, height, width).
Every reduction accumulates in float64 and rounds to float32 once on output.
Kernels never mutate their inputs.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError, InvalidInputError

logger = logging.getLogger(__name__)

Tensor = np.ndarray

_num_threads = 1


def set_num_threads(threads: int) -> None:
    """Cap the worker threads used to split output channels"""
    global _num_threads
    if int(threads) < 1:
        raise ConfigurationError(f"threads must be >= 1, got {threads}")
    _num_threads = int(threads)


def get_num_threads() -> int:
    return _num_threads


def as_tensor(x, name: str = "input") -> Tensor:
    """Validate rank 4 and return a contiguous float32 view or copy"""
    arr = np.asarray(x)
    if arr.ndim != 4:
        raise DimensionError(f"{name} must be a rank-4 tensor (b, c, h, w)", actual=arr.shape)
    return np.ascontiguousarray(arr, dtype=np.float32)


def _vector(v, length: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.shape[0] != length:
        raise DimensionError(f"{name} length does not match channel count", expected=(length,), actual=arr.shape)
    return arr


def _bias(bias, channels: int) -> np.ndarray:
    if bias is None:
        return np.zeros(channels, dtype=np.float64)
    return _vector(bias, channels, "bias")


def _check_geometry(stride: int, padding: int) -> None:
    if int(stride) != stride or stride < 1:
        raise ConfigurationError(f"stride must be a positive int, got {stride}")
    if int(padding) != padding or padding < 0:
        raise ConfigurationError(f"padding must be a non-negative int, got {padding}")


def _over_channels(channels: int, compute: Callable[[slice], None]) -> None:
    # each worker writes a disjoint channel slice of a preallocated output
    workers = min(_num_threads, channels)
    if workers <= 1:
        compute(slice(0, channels))
        return
    bounds = np.linspace(0, channels, workers + 1).astype(int)
    slices = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(compute, slices))


def conv2d(input: Tensor, weights: Tensor, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Direct cross-correlation with zero padding"""
    x = as_tensor(input)
    w = as_tensor(weights, "weights")
    b, c, h, wd = x.shape
    out_ch, in_ch, kh, kw = w.shape
    if in_ch != c:
        raise DimensionError("conv2d input channels differ from weight in_ch", expected=(b, in_ch, h, wd), actual=x.shape)
    _check_geometry(stride, padding)
    if kh > h + 2 * padding or kw > wd + 2 * padding:
        raise DimensionError(
            "conv2d kernel does not fit the padded input",
            expected=(kh, kw),
            actual=(h + 2 * padding, wd + 2 * padding),
        )
    if kh == 1 and kw == 1 and stride == 1 and padding == 0:
        return pointwise_conv2d(x, w, bias)

    bias64 = _bias(bias, out_ch)
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = windows.shape[2], windows.shape[3]
    w64 = w.astype(np.float64)
    out = np.empty((b, out_ch, ho, wo), dtype=np.float32)

    def compute(sl: slice) -> None:
        for n in range(b):
            res = np.tensordot(windows[n], w64[sl], axes=([0, 3, 4], [1, 2, 3]))
            out[n, sl] = np.moveaxis(res, -1, 0) + bias64[sl, None, None]

    _over_channels(out_ch, compute)
    return out


def depthwise_conv2d(input: Tensor, weights: Tensor, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Per-channel spatial filter; output channel c reads input channel c only"""
    x = as_tensor(input)
    w = as_tensor(weights, "weights")
    b, c, h, wd = x.shape
    if w.shape[0] != c or w.shape[1] != 1:
        raise DimensionError("depthwise weights must be (channels, 1, kh, kw)", expected=(c, 1) + w.shape[2:], actual=w.shape)
    _check_geometry(stride, padding)
    kh, kw = w.shape[2], w.shape[3]
    hp, wp = h + 2 * padding, wd + 2 * padding
    if kh > hp or kw > wp:
        raise DimensionError("depthwise kernel does not fit the padded input", expected=(kh, kw), actual=(hp, wp))

    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    w64 = w[:, 0].astype(np.float64)
    acc = np.zeros((b, c, ho, wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            tap = xp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
            acc += w64[None, :, i, j, None, None] * tap
    acc += _bias(bias, c)[None, :, None, None]
    return acc.astype(np.float32)


def pointwise_conv2d(input: Tensor, weights: Tensor, bias=None) -> Tensor:
    """1x1 convolution as a channel-mixing matrix product"""
    x = as_tensor(input)
    w = as_tensor(weights, "weights")
    b, c, h, wd = x.shape
    out_ch = w.shape[0]
    if w.shape[1] != c or w.shape[2:] != (1, 1):
        raise DimensionError("pointwise weights must be (out_ch, in_ch, 1, 1)", expected=(out_ch, c, 1, 1), actual=w.shape)

    bias64 = _bias(bias, out_ch)
    w64 = w[:, :, 0, 0].astype(np.float64)
    flat = x.reshape(b, c, h * wd).astype(np.float64)
    out = np.empty((b, out_ch, h, wd), dtype=np.float32)

    def compute(sl: slice) -> None:
        for n in range(b):
            res = w64[sl] @ flat[n] + bias64[sl, None]
            out[n, sl] = res.reshape(-1, h, wd)

    _over_channels(out_ch, compute)
    return out


def transposed_conv2d(input: Tensor, weights: Tensor, bias=None, stride: int = 2, padding: int = 0) -> Tensor:
    """Fractionally strided convolution that doubles both spatial extents.

    weights are laid out (in_ch, out_ch, kh, kw).
    """
    x = as_tensor(input)
    w = as_tensor(weights, "weights")
    b, c, h, wd = x.shape
    in_ch, out_ch, kh, kw = w.shape
    if in_ch != c:
        raise DimensionError("transposed conv input channels differ from weight in_ch", expected=(b, in_ch, h, wd), actual=x.shape)
    _check_geometry(stride, padding)
    full_h = (h - 1) * stride + kh
    full_w = (wd - 1) * stride + kw
    if full_h - 2 * padding != 2 * h or full_w - 2 * padding != 2 * wd:
        raise ConfigurationError(
            f"transposed conv with kernel {kh}x{kw}, stride {stride}, padding {padding} "
            f"does not double a {h}x{wd} input"
        )

    x64 = x.astype(np.float64)
    w64 = w.astype(np.float64)
    bias64 = _bias(bias, out_ch)
    out = np.empty((b, out_ch, 2 * h, 2 * wd), dtype=np.float32)
    for n in range(b):
        full = np.zeros((out_ch, full_h, full_w), dtype=np.float64)
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(w64[:, :, i, j], x64[n], axes=([0], [0]))
                full[:, i:i + stride * (h - 1) + 1:stride, j:j + stride * (wd - 1) + 1:stride] += contrib
        full = full[:, padding:padding + 2 * h, padding:padding + 2 * wd]
        out[n] = full + bias64[:, None, None]
    return out


def batchnorm_inference(input: Tensor, mean, var, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize with stored statistics: gamma * (x - mean) / sqrt(var + eps) + beta"""
    x = as_tensor(input)
    c = x.shape[1]
    mean64 = _vector(mean, c, "mean")
    var64 = _vector(var, c, "var")
    gamma64 = _vector(gamma, c, "gamma")
    beta64 = _vector(beta, c, "beta")
    if np.any(var64 < 0):
        raise InvalidInputError(f"batchnorm variance must be non-negative, min is {var64.min()}")
    denom = var64 + float(eps)
    if np.any(denom <= 0):
        raise InvalidInputError("batchnorm var + eps must be positive")
    scale = gamma64 / np.sqrt(denom)
    out = (x.astype(np.float64) - mean64[None, :, None, None]) * scale[None, :, None, None] + beta64[None, :, None, None]
    return out.astype(np.float32)


def relu(input: np.ndarray) -> np.ndarray:
    x = np.asarray(input, dtype=np.float32)
    return np.maximum(x, np.float32(0.0))


def silu(input: np.ndarray) -> np.ndarray:
    x = np.asarray(input, dtype=np.float32).astype(np.float64)
    e = np.exp(-np.abs(x))
    sigmoid = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return (x * sigmoid).astype(np.float32)


ACTIVATIONS = {"relu": relu, "silu": silu}


@dataclass(frozen=True)
class PatchSequence:
    """Token view of a feature map.

    tokens has shape (batch, ph*pw, n_patches, channels): one sequence per
    intra-patch pixel position, each running over the patch grid.
    """

    tokens: np.ndarray
    patch: Tuple[int, int]
    grid: Tuple[int, int]

    @classmethod
    def of(cls, tokens) -> "PatchSequence":
        """Wrap a bare (batch, seqs, len, dim) or (batch, len, dim) array"""
        arr = np.asarray(tokens, dtype=np.float32)
        if arr.ndim == 3:
            arr = arr[:, None]
        if arr.ndim != 4:
            raise DimensionError("token array must be rank 3 or 4", actual=arr.shape)
        return cls(arr, (1, arr.shape[1]), (1, arr.shape[2]))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.tokens.shape

    def with_tokens(self, tokens: np.ndarray) -> "PatchSequence":
        return PatchSequence(np.ascontiguousarray(tokens, dtype=np.float32), self.patch, self.grid)


SequenceLike = Union[PatchSequence, np.ndarray]


def _unwrap(seq: SequenceLike) -> Tuple[np.ndarray, Optional[PatchSequence]]:
    if isinstance(seq, PatchSequence):
        return seq.tokens, seq
    return np.asarray(seq, dtype=np.float32), None


def _rewrap(tokens: np.ndarray, like: Optional[PatchSequence]) -> SequenceLike:
    if like is None:
        return np.ascontiguousarray(tokens, dtype=np.float32)
    return like.with_tokens(tokens)


def unfold(input: Tensor, patch: Tuple[int, int]) -> PatchSequence:
    x = as_tensor(input)
    ph, pw = patch
    b, c, h, w = x.shape
    if ph < 1 or pw < 1 or h % ph or w % pw:
        raise DimensionError(f"spatial extents are not divisible by patch {ph}x{pw}", expected=(b, c, ph, pw), actual=x.shape)
    nh, nw = h // ph, w // pw
    tokens = x.reshape(b, c, nh, ph, nw, pw).transpose(0, 3, 5, 2, 4, 1).reshape(b, ph * pw, nh * nw, c)
    return PatchSequence(np.ascontiguousarray(tokens), (ph, pw), (nh, nw))


def fold(seq: PatchSequence) -> Tensor:
    b, p, n, c = seq.tokens.shape
    ph, pw = seq.patch
    nh, nw = seq.grid
    if p != ph * pw or n != nh * nw:
        raise DimensionError("token layout does not match patch grid", expected=(b, ph * pw, nh * nw, c), actual=seq.tokens.shape)
    x = seq.tokens.reshape(b, ph, pw, nh, nw, c).transpose(0, 5, 3, 1, 4, 2).reshape(b, c, nh * ph, nw * pw)
    return np.ascontiguousarray(x, dtype=np.float32)


def linear(x: np.ndarray, weight: np.ndarray, bias=None) -> np.ndarray:
    """Apply a (out, in) weight over the last axis"""
    x64 = np.asarray(x, dtype=np.float64)
    w64 = np.asarray(weight, dtype=np.float64)
    if w64.ndim != 2 or w64.shape[1] != x64.shape[-1]:
        raise DimensionError("linear weight must be (out, in) matching the last axis", expected=(w64.shape[0], x64.shape[-1]), actual=w64.shape)
    out = x64 @ w64.T
    if bias is not None:
        out = out + _vector(bias, w64.shape[0], "bias")
    return out.astype(np.float32)


def multihead_self_attention(
    seq: SequenceLike,
    wq: np.ndarray,
    wk: np.ndarray,
    wv: np.ndarray,
    wo: np.ndarray,
    heads: int,
    bo=None,
    return_weights: bool = False,
):
    """Scaled dot-product attention within each token sequence.

    Projections use (out, in) weights. No positional encoding is added.
    """
    tokens, like = _unwrap(seq)
    dim = tokens.shape[-1]
    wq64, wk64, wv64, wo64 = (np.asarray(m, dtype=np.float64) for m in (wq, wk, wv, wo))
    inner = wq64.shape[0]
    for name, m in (("wq", wq64), ("wk", wk64), ("wv", wv64)):
        if m.shape != (inner, dim):
            raise DimensionError(f"{name} must be (inner, dim)", expected=(inner, dim), actual=m.shape)
    if wo64.ndim != 2 or wo64.shape[1] != inner:
        raise DimensionError("wo must be (out, inner)", expected=(wo64.shape[0], inner), actual=wo64.shape)
    if heads < 1 or inner % heads:
        raise ConfigurationError(f"embedding dim {inner} is not divisible by {heads} heads")

    head_dim = inner // heads
    t = tokens.astype(np.float64)
    lead = t.shape[:-2]
    length = t.shape[-2]

    def split(m: np.ndarray) -> np.ndarray:
        return (t @ m.T).reshape(*lead, length, heads, head_dim).swapaxes(-2, -3)

    q, k, v = split(wq64), split(wk64), split(wv64)
    logits = (q @ k.swapaxes(-1, -2)) / np.sqrt(head_dim)
    logits -= logits.max(axis=-1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=-1, keepdims=True)
    context = (weights @ v).swapaxes(-2, -3).reshape(*lead, length, inner)
    out = context @ wo64.T
    if bo is not None:
        out = out + _vector(bo, wo64.shape[0], "bo")
    result = _rewrap(out, like)
    if return_weights:
        return result, weights
    return result


def layernorm(seq: SequenceLike, gamma, beta, eps: float = 1e-5) -> SequenceLike:
    """Normalize each token over its channels, then scale and shift"""
    tokens, like = _unwrap(seq)
    dim = tokens.shape[-1]
    gamma64 = _vector(gamma, dim, "gamma")
    beta64 = _vector(beta, dim, "beta")
    t = tokens.astype(np.float64)
    mean = t.mean(axis=-1, keepdims=True)
    centered = t - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    out = centered / np.sqrt(var + eps) * gamma64 + beta64
    return _rewrap(out, like)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    x = as_tensor(a, "a")
    y = as_tensor(b, "b")
    if x.shape[0] != y.shape[0] or x.shape[2:] != y.shape[2:]:
        raise DimensionError("concat needs matching batch and spatial extents", expected=x.shape, actual=y.shape)
    return np.concatenate([x, y], axis=1)
