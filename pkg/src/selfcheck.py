"""Built-in verification harness behind ``selfcheck``.

Runs the vectorized kernels against the loop oracles, the analytic loss
gradients against central differences, and the parameter/MAC counts
against the published figures.
"""
import logging
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel

from . import kernels, oracles
from .loss import DEFAULT_SOBEL, LossWeights, SobelOperator, balanced_loss, l_depth, l_grad, l_norm, l_ssim
from .model import ModelConfig, Variant
from .profiler import REFERENCE_MACS, REFERENCE_PARAMS, count_macs, count_params

logger = logging.getLogger(__name__)

KERNEL_TOLERANCE = 1e-6
GRADCHECK_TOLERANCE = 1e-3
PARAM_TOLERANCE = 0.05
MAC_TOLERANCE = 0.10
SCALING_TOLERANCE = 0.05

# keeps central differences clear of |x| kinks
KINK_MARGIN = 1e-3


class CheckResult(BaseModel):
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def to_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = f"check[{self.name}]: {status} measured={self.measured:.3e} tolerance={self.tolerance:.1e}"
        return f"{line} {self.detail}" if self.detail else line


class SelfCheckReport(BaseModel):
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_lines(self) -> List[str]:
        lines = [c.to_line() for c in self.checks]
        lines.append(f"summary: {len(self.checks) - len(self.failures)}/{len(self.checks)} passed")
        return lines


def _within(name: str, measured: float, tolerance: float, detail: str = "") -> CheckResult:
    return CheckResult(name=name, passed=bool(measured <= tolerance), measured=float(measured), tolerance=tolerance, detail=detail)


def _scaled(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return (rng.uniform(-1.0, 1.0, size=shape) / fan_in).astype(np.float32)


def _worst(instances: int, rng: np.random.Generator, case: Callable[[np.random.Generator], float]) -> float:
    return max(case(rng) for _ in range(instances))


def _conv_case(rng):
    b, c, o = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    k = int(rng.choice([1, 3]))
    stride, padding = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    h, w = int(rng.integers(k, 7)), int(rng.integers(k, 7))
    x = rng.uniform(-1, 1, (b, c, h, w)).astype(np.float32)
    wt = _scaled(rng, (o, c, k, k), c * k * k)
    bias = rng.uniform(-1, 1, o).astype(np.float32)
    got = kernels.conv2d(x, wt, bias, stride, padding)
    return float(np.max(np.abs(got - oracles.conv2d(x, wt, bias, stride, padding))))


def _depthwise_case(rng):
    b, c = int(rng.integers(1, 3)), int(rng.integers(1, 5))
    stride, padding = int(rng.integers(1, 3)), 1
    h, w = int(rng.integers(3, 8)), int(rng.integers(3, 8))
    x = rng.uniform(-1, 1, (b, c, h, w)).astype(np.float32)
    wt = _scaled(rng, (c, 1, 3, 3), 9)
    bias = rng.uniform(-1, 1, c).astype(np.float32)
    got = kernels.depthwise_conv2d(x, wt, bias, stride, padding)
    return float(np.max(np.abs(got - oracles.depthwise_conv2d(x, wt, bias, stride, padding))))


def _pointwise_case(rng):
    b, c, o = int(rng.integers(1, 3)), int(rng.integers(1, 6)), int(rng.integers(1, 6))
    h, w = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    x = rng.uniform(-1, 1, (b, c, h, w)).astype(np.float32)
    wt = _scaled(rng, (o, c, 1, 1), c)
    bias = rng.uniform(-1, 1, o).astype(np.float32)
    got = kernels.pointwise_conv2d(x, wt, bias)
    return float(np.max(np.abs(got - oracles.conv2d(x, wt, bias))))


def _tconv_case(rng):
    b, c, o = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    h, w = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    x = rng.uniform(-1, 1, (b, c, h, w)).astype(np.float32)
    wt = _scaled(rng, (c, o, 2, 2), c)
    bias = rng.uniform(-1, 1, o).astype(np.float32)
    got = kernels.transposed_conv2d(x, wt, bias)
    return float(np.max(np.abs(got - oracles.transposed_conv2d(x, wt, bias))))


def _batchnorm_case(rng):
    c = int(rng.integers(1, 5))
    x = rng.uniform(-1, 1, (int(rng.integers(1, 3)), c, 3, 4)).astype(np.float32)
    mean = rng.uniform(-0.5, 0.5, c).astype(np.float32)
    var = rng.uniform(0.5, 2.0, c).astype(np.float32)
    gamma = rng.uniform(0.5, 1.5, c).astype(np.float32)
    beta = rng.uniform(-0.5, 0.5, c).astype(np.float32)
    got = kernels.batchnorm_inference(x, mean, var, gamma, beta, 1e-5)
    return float(np.max(np.abs(got - oracles.batchnorm(x, mean, var, gamma, beta, 1e-5))))


def _attention_case(rng):
    heads = int(rng.choice([1, 2, 4]))
    dim = heads * int(rng.integers(1, 4))
    tokens = rng.uniform(-1, 1, (1, int(rng.integers(1, 4)), int(rng.integers(1, 6)), dim)).astype(np.float32)
    wq, wk, wv, wo = (_scaled(rng, (dim, dim), dim) for _ in range(4))
    bo = rng.uniform(-0.5, 0.5, dim).astype(np.float32)
    got = kernels.multihead_self_attention(tokens, wq, wk, wv, wo, heads, bo=bo)
    return float(np.max(np.abs(got - oracles.attention(tokens, wq, wk, wv, wo, heads, bo))))


def _layernorm_case(rng):
    dim = int(rng.integers(2, 9))
    tokens = rng.uniform(-1, 1, (1, 2, int(rng.integers(1, 5)), dim)).astype(np.float32)
    gamma = rng.uniform(0.5, 1.0, dim).astype(np.float32)
    beta = rng.uniform(-0.5, 0.5, dim).astype(np.float32)
    got = kernels.layernorm(tokens, gamma, beta, 1e-5)
    return float(np.max(np.abs(got - oracles.layernorm(tokens, gamma, beta, 1e-5))))


def _fold_case(rng):
    ph, pw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    x = rng.standard_normal((int(rng.integers(1, 3)), int(rng.integers(1, 4)), ph * int(rng.integers(1, 4)), pw * int(rng.integers(1, 4)))).astype(np.float32)
    seq = kernels.unfold(x, (ph, pw))
    layout = 0.0 if np.array_equal(seq.tokens, oracles.unfold_index(x, (ph, pw))) else 1.0
    roundtrip = 0.0 if np.array_equal(kernels.fold(seq), x) else 1.0
    return max(layout, roundtrip)


def _linear_case(rng):
    d_in, d_out = int(rng.integers(1, 9)), int(rng.integers(1, 9))
    x = rng.uniform(-1, 1, (1, int(rng.integers(1, 3)), int(rng.integers(1, 5)), d_in)).astype(np.float32)
    wt = _scaled(rng, (d_out, d_in), d_in)
    bias = rng.uniform(-1, 1, d_out).astype(np.float32)
    got = kernels.linear(x, wt, bias)
    return float(np.max(np.abs(got - oracles.linear(x, wt, bias))))


def _activation_case(name):
    kernel, oracle = kernels.ACTIVATIONS[name], getattr(oracles, name)

    def case(rng):
        x = rng.uniform(-4, 4, (int(rng.integers(1, 3)), int(rng.integers(1, 4)), 3, 4)).astype(np.float32)
        return float(np.max(np.abs(kernel(x) - oracle(x))))

    return case


def _concat_case(rng):
    b, h, w = int(rng.integers(1, 3)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
    a = rng.standard_normal((b, int(rng.integers(1, 4)), h, w)).astype(np.float32)
    c = rng.standard_normal((b, int(rng.integers(1, 4)), h, w)).astype(np.float32)
    return float(np.max(np.abs(kernels.concat_channels(a, c) - oracles.concat_channels(a, c))))


KERNEL_CASES = {
    "conv2d": _conv_case,
    "depthwise_conv2d": _depthwise_case,
    "pointwise_conv2d": _pointwise_case,
    "transposed_conv2d": _tconv_case,
    "batchnorm_inference": _batchnorm_case,
    "multihead_self_attention": _attention_case,
    "layernorm": _layernorm_case,
    "linear": _linear_case,
    "relu": _activation_case("relu"),
    "silu": _activation_case("silu"),
    "concat_channels": _concat_case,
}


def kernel_checks(seed: int = 42, instances: int = 50) -> List[CheckResult]:
    results = []
    for offset, (name, case) in enumerate(KERNEL_CASES.items()):
        rng = np.random.default_rng([seed, offset])
        results.append(_within(f"kernel.{name}", _worst(instances, rng, case), KERNEL_TOLERANCE, f"instances={instances}"))
    rng = np.random.default_rng([seed, len(KERNEL_CASES)])
    results.append(_within("kernel.fold_unfold", _worst(instances, rng, _fold_case), 0.0, "bit-exact"))
    return results


def _pair(rng: np.random.Generator, size: int = 8):
    y = rng.uniform(0.5, 10.0, (size, size))
    y_hat = y + rng.choice([-1.0, 1.0], (size, size)) * rng.uniform(0.05, 1.0, (size, size))
    return y, y_hat


def gradcheck_terms(sobel: SobelOperator = DEFAULT_SOBEL):
    """(name, term) pairs; term(y, y_hat, gradient) returns (value, gradient)"""
    weights = LossWeights(lambda1=0.5, lambda2=1.0, lambda3=1.0)
    return [
        ("l_depth", lambda y, p, g: l_depth(y, p, g)),
        ("l_grad", lambda y, p, g: l_grad(y, p, g, sobel=sobel)),
        ("l_grad.abs", lambda y, p, g: l_grad(y, p, g, mode="abs", sobel=sobel)),
        ("l_norm", lambda y, p, g: l_norm(y, p, g, sobel=sobel)),
        ("l_ssim", lambda y, p, g: l_ssim(y, p, 10.0, g)),
        ("balanced_loss", lambda y, p, g: _as_term(balanced_loss(y, p, weights, 10.0, g, sobel=sobel))),
    ]


def _as_term(report):
    return report.total, report.gradient


def _kink_free(name: str, y: np.ndarray, y_hat: np.ndarray, sobel: SobelOperator) -> bool:
    if name != "l_grad.abs":
        return True
    # |gx| and |gy| are not differentiable where the Sobel response vanishes
    gx, gy = sobel(np.abs(y_hat - y))
    return bool((np.abs(gx) > KINK_MARGIN).all() and (np.abs(gy) > KINK_MARGIN).all())


def gradient_checks(seed: int = 42, pairs: int = 20, sobel: SobelOperator = DEFAULT_SOBEL) -> List[CheckResult]:
    results = []
    for offset, (name, term) in enumerate(gradcheck_terms(sobel)):
        rng = np.random.default_rng([seed, 100 + offset])
        worst = 0.0
        used = 0
        attempts = 0
        while used < pairs and attempts < 20 * pairs:
            attempts += 1
            y, y_hat = _pair(rng)
            if not _kink_free(name, y, y_hat, sobel):
                continue
            _, analytic = term(y, y_hat, True)
            numeric = oracles.finite_difference(lambda p: term(y, p, False)[0], y_hat)
            worst = max(worst, oracles.relative_error(analytic, numeric))
            used += 1
        results.append(_within(f"gradcheck.{name}", worst, GRADCHECK_TOLERANCE, f"pairs={used}"))
    return results


def loss_oracle_checks(seed: int = 42, instances: int = 10) -> List[CheckResult]:
    rng = np.random.default_rng([seed, 200])
    sobel_err = 0.0
    ssim_err = 0.0
    for _ in range(instances):
        y, y_hat = _pair(rng, int(rng.integers(7, 11)))
        gx, gy = DEFAULT_SOBEL(y_hat)
        ox, oy = oracles.sobel(y_hat)
        sobel_err = max(sobel_err, float(np.max(np.abs(gx - ox))), float(np.max(np.abs(gy - oy))))
        ssim = 1.0 - l_ssim(y, y_hat, 10.0).value
        ssim_err = max(ssim_err, abs(ssim - oracles.ssim_mean(y, y_hat, 10.0)))
    return [
        _within("loss.sobel", sobel_err, 1e-9),
        _within("loss.ssim", ssim_err, 1e-9),
    ]


def table_checks() -> List[CheckResult]:
    results = []
    macs = {}
    for variant in Variant:
        config = ModelConfig.preset(variant)
        params = count_params(config).params_total
        dev = abs(params / REFERENCE_PARAMS[variant] - 1.0)
        results.append(_within(f"params.{variant.value}", dev, PARAM_TOLERANCE, f"value={params}"))
        for (v, size), ref in REFERENCE_MACS.items():
            if v is not variant:
                continue
            total = count_macs(config, size).macs_total
            macs[(variant, size)] = total
            h, w = size
            results.append(_within(f"macs.{variant.value}.{w}x{h}", abs(total / ref - 1.0), MAC_TOLERANCE, f"value={total}"))
        ratio = macs[(variant, (192, 636))] / macs[(variant, (192, 256))]
        results.append(_within(f"macs.scaling.{variant.value}", abs(ratio / (636 / 256) - 1.0), SCALING_TOLERANCE, f"ratio={ratio:.4f}"))
    for size in ((192, 256), (192, 636)):
        ordered = macs[(Variant.XXS, size)] < macs[(Variant.XS, size)] < macs[(Variant.S, size)]
        h, w = size
        results.append(CheckResult(name=f"macs.ordering.{w}x{h}", passed=ordered, measured=0.0 if ordered else 1.0, tolerance=0.0))
    return results


def run_selfcheck(
    seed: int = 42,
    instances: int = 50,
    pairs: int = 20,
    sobel: Optional[SobelOperator] = None,
) -> SelfCheckReport:
    """Every check, in a stable order; ``sobel`` replaces the operator under gradcheck"""
    sobel = sobel or DEFAULT_SOBEL
    checks = kernel_checks(seed, instances)
    checks += gradient_checks(seed, pairs, sobel)
    checks += loss_oracle_checks(seed)
    checks += table_checks()
    report = SelfCheckReport(checks=checks)
    for failure in report.failures:
        logger.warning(f"Self-check failed: {failure.to_line()}")
    logger.info("Self-check finished", extra={"extra": {"checks": len(checks), "failed": len(report.failures)}})
    return report


def faulty_sobel() -> SobelOperator:
    """Operator whose adjoint disagrees with its forward stencil"""
    perturbed = DEFAULT_SOBEL.kernel_x.copy()
    perturbed[0, 2] += 0.5
    return SobelOperator(adjoint_kernel_x=perturbed)
