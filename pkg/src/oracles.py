"""Brute-force reference implementations.

Loop-based and slow on purpose; the self-check harness and the test suite
compare the vectorized kernels and losses against these.
"""
import math
from typing import Callable, Optional, Tuple

import numpy as np


def conv2d(x, w, bias=None, stride: int = 1, padding: int = 0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((b, o, ho, wo))
    for n in range(b):
        for oc in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0 if bias is None else float(bias[oc])
                    for ic in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                r = i * stride + di - padding
                                s = j * stride + dj - padding
                                if 0 <= r < h and 0 <= s < wd:
                                    acc += x[n, ic, r, s] * w[oc, ic, di, dj]
                    out[n, oc, i, j] = acc
    return out


def depthwise_conv2d(x, w, bias=None, stride: int = 1, padding: int = 0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    channels = []
    for ch in range(x.shape[1]):
        cb = None if bias is None else [bias[ch]]
        channels.append(conv2d(x[:, ch:ch + 1], w[ch:ch + 1], cb, stride, padding))
    return np.concatenate(channels, axis=1)


def transposed_conv2d(x, w, bias=None, stride: int = 2, padding: int = 0) -> np.ndarray:
    """Scatter every input pixel through the kernel into the output"""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b, c, h, wd = x.shape
    _, o, kh, kw = w.shape
    full = np.zeros((b, o, (h - 1) * stride + kh, (wd - 1) * stride + kw))
    for n in range(b):
        for ic in range(c):
            for i in range(h):
                for j in range(wd):
                    for oc in range(o):
                        for di in range(kh):
                            for dj in range(kw):
                                full[n, oc, i * stride + di, j * stride + dj] += x[n, ic, i, j] * w[ic, oc, di, dj]
    out = full[:, :, padding:full.shape[2] - padding, padding:full.shape[3] - padding]
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[None, :, None, None]
    return out


def batchnorm(x, mean, var, gamma, beta, eps: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for idx in np.ndindex(*x.shape):
        ch = idx[1]
        out[idx] = gamma[ch] * (x[idx] - mean[ch]) / np.sqrt(var[ch] + eps) + beta[ch]
    return out


def unfold_index(x, patch: Tuple[int, int]) -> np.ndarray:
    """Token array built by enumerating pixel and patch indices"""
    x = np.asarray(x)
    b, c, h, w = x.shape
    ph, pw = patch
    nh, nw = h // ph, w // pw
    out = np.zeros((b, ph * pw, nh * nw, c), dtype=x.dtype)
    for n in range(b):
        for pi in range(ph):
            for pj in range(pw):
                for gi in range(nh):
                    for gj in range(nw):
                        for ch in range(c):
                            out[n, pi * pw + pj, gi * nw + gj, ch] = x[n, ch, gi * ph + pi, gj * pw + pj]
    return out


def attention(tokens, wq, wk, wv, wo, heads: int, bo=None) -> np.ndarray:
    """Per-token, per-head loops over (..., length, dim) tokens"""
    t = np.asarray(tokens, dtype=np.float64)
    lead = t.shape[:-2]
    length, dim = t.shape[-2:]
    inner = wq.shape[0]
    hd = inner // heads
    out = np.zeros(lead + (length, wo.shape[0]))
    for idx in np.ndindex(*lead):
        seq = t[idx]
        q = [np.asarray(wq, dtype=np.float64) @ seq[i] for i in range(length)]
        k = [np.asarray(wk, dtype=np.float64) @ seq[i] for i in range(length)]
        v = [np.asarray(wv, dtype=np.float64) @ seq[i] for i in range(length)]
        for i in range(length):
            concat = np.zeros(inner)
            for head in range(heads):
                sl = slice(head * hd, (head + 1) * hd)
                scores = [float(np.dot(q[i][sl], k[j][sl])) / np.sqrt(hd) for j in range(length)]
                top = max(scores)
                exps = [np.exp(s - top) for s in scores]
                total = sum(exps)
                for j in range(length):
                    concat[sl] += exps[j] / total * v[j][sl]
            y = np.asarray(wo, dtype=np.float64) @ concat
            if bo is not None:
                y = y + np.asarray(bo, dtype=np.float64)
            out[idx + (i,)] = y
    return out


def layernorm(tokens, gamma, beta, eps: float) -> np.ndarray:
    t = np.asarray(tokens, dtype=np.float64)
    out = np.empty_like(t)
    for idx in np.ndindex(*t.shape[:-1]):
        row = t[idx]
        mean = sum(row) / len(row)
        var = sum((r - mean) ** 2 for r in row) / len(row)
        out[idx] = (row - mean) / np.sqrt(var + eps) * gamma + beta
    return out


def linear(x, weight, bias=None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(weight, dtype=np.float64)
    out = np.zeros(x.shape[:-1] + (w.shape[0],))
    for idx in np.ndindex(*x.shape[:-1]):
        for o in range(w.shape[0]):
            acc = sum(w[o, i] * x[idx + (i,)] for i in range(w.shape[1]))
            out[idx + (o,)] = acc + (float(bias[o]) if bias is not None else 0.0)
    return out


def relu(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for idx in np.ndindex(*x.shape):
        out[idx] = x[idx] if x[idx] > 0 else 0.0
    return out


def silu(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for idx in np.ndindex(*x.shape):
        out[idx] = x[idx] / (1.0 + math.exp(-x[idx]))
    return out


def concat_channels(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    n, ca, h, w = a.shape
    cb = b.shape[1]
    out = np.zeros((n, ca + cb, h, w), dtype=np.result_type(a, b))
    for idx in np.ndindex(n, ca + cb, h, w):
        src, ch = (a, idx[1]) if idx[1] < ca else (b, idx[1] - ca)
        out[idx] = src[idx[0], ch, idx[2], idx[3]]
    return out



def sobel(z) -> Tuple[np.ndarray, np.ndarray]:
    """Hand-applied 3x3 Sobel stencils with replicate borders"""
    z = np.asarray(z, dtype=np.float64)
    h, w = z.shape

    def at(i, j):
        return z[min(max(i, 0), h - 1), min(max(j, 0), w - 1)]

    gx = np.zeros_like(z)
    gy = np.zeros_like(z)
    for i in range(h):
        for j in range(w):
            gx[i, j] = (at(i - 1, j + 1) + 2 * at(i, j + 1) + at(i + 1, j + 1)) - (at(i - 1, j - 1) + 2 * at(i, j - 1) + at(i + 1, j - 1))
            gy[i, j] = (at(i + 1, j - 1) + 2 * at(i + 1, j) + at(i + 1, j + 1)) - (at(i - 1, j - 1) + 2 * at(i - 1, j) + at(i - 1, j + 1))
    return gx, gy


def ssim_mean(y, y_hat, dynamic_range: float, window: int = 7) -> float:
    """Mean SSIM by looping over every valid window of a 2-D map"""
    a = np.asarray(y_hat, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    h, w = a.shape
    values = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            pa = a[i:i + window, j:j + window].ravel()
            pb = b[i:i + window, j:j + window].ravel()
            mu_a, mu_b = pa.mean(), pb.mean()
            var_a = ((pa - mu_a) ** 2).mean()
            var_b = ((pb - mu_b) ** 2).mean()
            cov = ((pa - mu_a) * (pb - mu_b)).mean()
            values.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
    return float(np.mean(values))


def finite_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, step: Optional[float] = None) -> np.ndarray:
    """Central differences of a scalar function, one coordinate at a time"""
    x = np.array(x, dtype=np.float64)
    if step is None:
        step = 1e-5 * max(1.0, float(np.max(np.abs(x))))
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        orig = x[idx]
        x[idx] = orig + step
        up = fn(x)
        x[idx] = orig - step
        down = fn(x)
        x[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """Largest deviation scaled by the larger gradient magnitude"""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if mask is not None:
        a, n = a[mask], n[mask]
    if a.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))), 1e-12)
    return float(np.max(np.abs(a - n)) / scale)
