"""METER encoder-decoder for monocular depth.

The network is described once as an ordered layer plan (``plan_layers``).
Weight shapes, initialization, forward execution and the profiler's
closed-form counts all read the same plan.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import kernels
from .config import load_model_config
from .errors import ConfigurationError, DimensionError
from .kernels import PatchSequence, Tensor

logger = logging.getLogger(__name__)

LAYERNORM_EPS = 1e-5
NUM_CHANNELS = 10
# four stride-2 stages before the last METER block
ENCODER_STRIDE = 16


class Variant(str, Enum):
    S = "S"
    XS = "XS"
    XXS = "XXS"

    @classmethod
    def parse(cls, name: str) -> "Variant":
        try:
            return cls(str(name).upper())
        except ValueError:
            raise ConfigurationError(f"unknown variant '{name}', expected one of s, xs, xxs")


class Activation(str, Enum):
    RELU = "relu"
    SILU = "silu"


class ModelConfig(BaseModel):
    """Structural description of one METER network"""

    model_config = ConfigDict(frozen=True)

    variant: Variant
    channels: Tuple[int, ...] = Field(..., description="Channel plan C1..C10")
    transformer_dims: Tuple[int, int] = Field(..., description="Embedding dims of the C4 and C5 stage METER blocks")
    activation: Activation = Activation.RELU
    patch: Tuple[int, int] = (4, 4)
    heads: int = Field(4, ge=1)
    ffn_mult: float = Field(4.0, gt=0)
    mv2_expansion: int = Field(2, ge=1)
    input_size: Tuple[int, int] = Field((192, 256), description="(H, W) of the input image")
    depth_range: Tuple[float, float] = Field((0.1, 10.0), description="(min_m, max_m) clamp range")
    bn_eps: float = Field(1e-5, gt=0)
    output_scale: float = 0.5

    @classmethod
    def preset(cls, variant, **overrides: Any) -> "ModelConfig":
        """Build a config from the presets in config/model_config.yaml"""
        v = variant if isinstance(variant, Variant) else Variant.parse(variant)
        data = load_model_config()
        presets = data["presets"]
        key = v.value.lower()
        if key not in presets:
            raise ConfigurationError(f"no preset for variant {v.value}")
        fields: Dict[str, Any] = {**data["defaults"], **presets[key], "variant": v}
        fields.update({k: val for k, val in overrides.items() if val is not None})
        return cls(**fields)

    def check(self) -> None:
        """Cross-field structural checks; raises ConfigurationError"""
        if len(self.channels) != NUM_CHANNELS or any(c < 1 for c in self.channels):
            raise ConfigurationError(f"channel plan must be {NUM_CHANNELS} positive ints, got {self.channels}")
        if any(d < 1 for d in self.transformer_dims):
            raise ConfigurationError(f"transformer dims must be positive, got {self.transformer_dims}")
        for d in self.transformer_dims:
            if d % self.heads:
                raise ConfigurationError(f"transformer dim {d} is not divisible by {self.heads} heads")
        if min(self.patch) < 1:
            raise ConfigurationError(f"patch must be positive, got {self.patch}")
        h, w = self.input_size
        if h < 2 or w < 2 or h % 2 or w % 2:
            raise ConfigurationError(f"input size {h}x{w} must have positive even extents")
        lo, hi = self.depth_range
        if not (0 <= lo < hi):
            raise ConfigurationError(f"depth range must satisfy 0 <= min < max, got {self.depth_range}")
        if self.output_scale != 0.5:
            raise ConfigurationError("output scale is fixed at 1/2")

    @property
    def alignment(self) -> Tuple[int, int]:
        return ENCODER_STRIDE * self.patch[0], ENCODER_STRIDE * self.patch[1]

    @property
    def working_size(self) -> Tuple[int, int]:
        """Input extents after bottom/right padding to the encoder alignment"""
        return working_size(self.input_size, self.alignment)

    @property
    def output_size(self) -> Tuple[int, int]:
        return self.input_size[0] // 2, self.input_size[1] // 2

    def ffn_hidden(self, dim: int) -> int:
        return max(1, int(round(dim * self.ffn_mult)))

    def with_input_size(self, height: int, width: int) -> "ModelConfig":
        return self.model_copy(update={"input_size": (int(height), int(width))})


def working_size(input_size: Tuple[int, int], alignment: Tuple[int, int]) -> Tuple[int, int]:
    h, w = input_size
    ah, aw = alignment
    return -(-h // ah) * ah, -(-w // aw) * aw


@dataclass(frozen=True)
class LayerSpec:
    """One parameterized layer of the plan.

    ``scale`` is the downsampling factor of the layer input relative to the
    working image.
    """

    name: str
    kind: str
    in_ch: int
    out_ch: int
    scale: int
    kernel: int = 1
    stride: int = 1
    groups: int = 1
    bias: bool = False
    batchnorm: bool = False
    heads: int = 0
    ffn_hidden: int = 0
    patch: Tuple[int, int] = (1, 1)

    @property
    def padding(self) -> int:
        return self.kernel // 2 if self.kind == "conv" else 0

    def weight_shapes(self) -> Dict[str, Tuple[int, ...]]:
        n = self.name
        if self.kind == "conv":
            shapes = {f"{n}.weight": (self.out_ch, self.in_ch // self.groups, self.kernel, self.kernel)}
            if self.bias:
                shapes[f"{n}.bias"] = (self.out_ch,)
            if self.batchnorm:
                for part in ("gamma", "beta", "running_mean", "running_var"):
                    shapes[f"{n}.bn.{part}"] = (self.out_ch,)
            return shapes
        if self.kind == "tconv":
            return {
                f"{n}.weight": (self.in_ch, self.out_ch, self.kernel, self.kernel),
                f"{n}.bias": (self.out_ch,),
            }
        d, hid = self.in_ch, self.ffn_hidden
        return {
            f"{n}.norm1.gamma": (d,),
            f"{n}.norm1.beta": (d,),
            f"{n}.attn.q.weight": (d, d),
            f"{n}.attn.k.weight": (d, d),
            f"{n}.attn.v.weight": (d, d),
            f"{n}.attn.out.weight": (d, d),
            f"{n}.attn.out.bias": (d,),
            f"{n}.norm2.gamma": (d,),
            f"{n}.norm2.beta": (d,),
            f"{n}.ffn.fc1.weight": (hid, d),
            f"{n}.ffn.fc1.bias": (hid,),
            f"{n}.ffn.fc2.weight": (d, hid),
            f"{n}.ffn.fc2.bias": (d,),
        }

    @property
    def params(self) -> int:
        """Trainable elements; batchnorm running statistics excluded"""
        return sum(
            int(np.prod(shape))
            for name, shape in self.weight_shapes().items()
            if not is_running_statistic(name)
        )

    def input_hw(self, work_h: int, work_w: int) -> Tuple[int, int]:
        return work_h // self.scale, work_w // self.scale

    def output_shape(self, work_h: int, work_w: int) -> Tuple[int, int, int, int]:
        h, w = self.input_hw(work_h, work_w)
        if self.kind == "conv":
            h = (h + 2 * self.padding - self.kernel) // self.stride + 1
            w = (w + 2 * self.padding - self.kernel) // self.stride + 1
        elif self.kind == "tconv":
            h, w = 2 * h, 2 * w
        return 1, self.out_ch, h, w

    def macs(self, work_h: int, work_w: int) -> int:
        """Multiply-accumulates for one image at the given working size"""
        if self.kind == "conv":
            _, _, ho, wo = self.output_shape(work_h, work_w)
            return ho * wo * self.out_ch * (self.in_ch // self.groups) * self.kernel * self.kernel
        h, w = self.input_hw(work_h, work_w)
        if self.kind == "tconv":
            return h * w * self.in_ch * self.out_ch * self.kernel * self.kernel
        tokens = h * w
        d, hid = self.in_ch, self.ffn_hidden
        seqs = self.patch[0] * self.patch[1]
        length = tokens // seqs
        projections = 4 * tokens * d * d
        scores = 2 * seqs * length * length * d
        ffn = 2 * tokens * d * hid
        return projections + scores + ffn


def is_running_statistic(name: str) -> bool:
    return name.endswith(".running_mean") or name.endswith(".running_var")


def _conv(name, cin, cout, scale, kernel=1, stride=1, groups=1, batchnorm=True, bias=False) -> LayerSpec:
    return LayerSpec(name, "conv", cin, cout, scale, kernel=kernel, stride=stride, groups=groups, batchnorm=batchnorm, bias=bias)


def mv2_layers(name: str, in_ch: int, out_ch: int, stride: int, expansion: int, scale: int) -> List[LayerSpec]:
    hidden = in_ch * expansion
    layers = []
    if expansion != 1:
        layers.append(_conv(f"{name}.expand", in_ch, hidden, scale))
    layers.append(_conv(f"{name}.depthwise", hidden, hidden, scale, kernel=3, stride=stride, groups=hidden))
    layers.append(_conv(f"{name}.project", hidden, out_ch, scale * stride))
    return layers


@dataclass(frozen=True)
class MeterBlockSpec:
    name: str
    channels: int
    dim: int
    patch: Tuple[int, int]
    heads: int
    ffn_hidden: int

    def layers(self, scale: int) -> List[LayerSpec]:
        n, c, d = self.name, self.channels, self.dim
        return [
            _conv(f"{n}.local.depthwise", c, c, scale, kernel=3, groups=c),
            _conv(f"{n}.local.pointwise", c, d, scale),
            LayerSpec(f"{n}.transformer", "transformer", d, d, scale, heads=self.heads, ffn_hidden=self.ffn_hidden, patch=self.patch),
            _conv(f"{n}.fuse", c + d, c, scale),
            _conv(f"{n}.out.depthwise", c, c, scale, kernel=3, groups=c),
            _conv(f"{n}.out.pointwise", c, c, scale),
        ]


def _meter_spec(config: ModelConfig, name: str, channels: int, dim: int) -> MeterBlockSpec:
    return MeterBlockSpec(name, channels, dim, tuple(config.patch), config.heads, config.ffn_hidden(dim))


def _up_layers(name: str, in_ch: int, out_ch: int, skip_ch: int, scale: int) -> List[LayerSpec]:
    merged = out_ch + skip_ch
    return [
        LayerSpec(f"{name}.tconv", "tconv", in_ch, out_ch, scale, kernel=2, stride=2, bias=True),
        _conv(f"{name}.conv.depthwise", merged, merged, scale // 2, kernel=3, groups=merged),
        _conv(f"{name}.conv.pointwise", merged, out_ch, scale // 2),
    ]


def plan_layers(config: ModelConfig) -> List[LayerSpec]:
    """Every parameterized layer in execution order"""
    c1, c2, c3, c4, c5, c6, c7, c8, c9, c10 = config.channels
    d4, d5 = config.transformer_dims
    e = config.mv2_expansion
    layers = [_conv("encoder.stem", 3, c1, 1, kernel=3, stride=2)]
    layers += mv2_layers("encoder.stage1.mv2", c1, c2, 1, e, 2)
    layers += mv2_layers("encoder.stage2.mv2_0", c2, c3, 2, e, 2)
    layers += mv2_layers("encoder.stage2.mv2_1", c3, c3, 1, e, 4)
    layers += mv2_layers("encoder.stage2.mv2_2", c3, c3, 1, e, 4)
    layers += mv2_layers("encoder.stage3.mv2", c3, c4, 2, e, 4)
    layers += _meter_spec(config, "encoder.stage3.meter", c4, d4).layers(8)
    layers += mv2_layers("encoder.stage4.mv2", c4, c5, 2, e, 8)
    layers += _meter_spec(config, "encoder.stage4.meter", c5, d5).layers(16)
    layers.append(_conv("encoder.head", c5, c6, 16))
    layers.append(_conv("decoder.conv_in", c6, c7, 16))
    layers += _up_layers("decoder.up1", c7, c8, c4, 16)
    layers += _up_layers("decoder.up2", c8, c9, c3, 8)
    layers += _up_layers("decoder.up3", c9, c10, c2, 4)
    layers.append(_conv("decoder.conv_out", c10, 1, 2, batchnorm=False, bias=True))
    return layers


def _shapes_of(layers: Sequence[LayerSpec]) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for spec in layers:
        shapes.update(spec.weight_shapes())
    return shapes


def weight_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Name -> shape of every stored tensor, in plan order"""
    config.check()
    return _shapes_of(plan_layers(config))


def init_weights(layers: Sequence[LayerSpec], seed: int) -> Dict[str, np.ndarray]:
    """Fan-in scaled uniform weights, zero biases, identity normalization"""
    rng = np.random.default_rng(seed)
    weights: Dict[str, np.ndarray] = {}
    for spec in layers:
        for name, shape in spec.weight_shapes().items():
            if name.endswith(".weight"):
                if spec.kind == "tconv":
                    # k == stride: each output pixel sees one tap per input channel
                    fan_in = shape[0]
                else:
                    fan_in = int(np.prod(shape[1:]))
                bound = np.sqrt(6.0 / fan_in)
                value = rng.uniform(-bound, bound, size=shape)
            elif name.endswith((".gamma", ".running_var")):
                value = np.ones(shape)
            else:
                value = np.zeros(shape)
            weights[name] = value.astype(np.float32)
    return weights


@dataclass(frozen=True)
class DepthMap:
    values: np.ndarray
    valid_mask: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    def stats(self) -> Dict[str, float]:
        v = self.values.astype(np.float64)
        if self.valid_mask is not None:
            v = v[self.valid_mask]
        return {"min_m": float(v.min()), "max_m": float(v.max()), "mean_m": float(v.mean())}


class MeterModel:
    """Immutable weight set plus layer plan for one configuration"""

    def __init__(self, config: ModelConfig, weights: Mapping[str, np.ndarray]):
        config.check()
        self.config = config
        self.layers: List[LayerSpec] = plan_layers(config)
        self.weights = weights
        self.check_shapes()
        for arr in self.weights.values():
            arr.setflags(write=False)
        self._activation = kernels.ACTIVATIONS[config.activation.value]

    @property
    def variant(self) -> Variant:
        return self.config.variant

    @property
    def param_count(self) -> int:
        return sum(spec.params for spec in self.layers)

    def expected_shapes(self) -> Dict[str, Tuple[int, ...]]:
        return _shapes_of(self.layers)

    def check_shapes(self) -> None:
        expected = self.expected_shapes()
        missing = [n for n in expected if n not in self.weights]
        extra = [n for n in self.weights if n not in expected]
        if missing or extra:
            raise ConfigurationError(f"weights do not match the layer plan (missing {missing[:5]}, unexpected {extra[:5]})")
        for name, shape in expected.items():
            actual = tuple(self.weights[name].shape)
            if actual != shape:
                raise DimensionError(f"weight '{name}' has the wrong shape", expected=shape, actual=actual)
            if self.weights[name].dtype != np.float32:
                raise ConfigurationError(f"weight '{name}' must be float32")

    def resized(self, height: int, width: int) -> "MeterModel":
        """Same weights, different input size"""
        return MeterModel(self.config.with_input_size(height, width), self.weights)

    def forward(self, image: Tensor) -> DepthMap:
        return forward(self, image)

    def predict(self, image: Tensor) -> np.ndarray:
        return forward(self, image).values

    def __repr__(self) -> str:
        return f"MeterModel(variant={self.config.variant.value}, params={self.param_count})"


def build(config: ModelConfig, seed: int = 42) -> MeterModel:
    """Instantiate a model with deterministic random weights"""
    config.check()
    layers = plan_layers(config)
    model = MeterModel(config, init_weights(layers, seed))
    logger.info(
        "Built model",
        extra={"extra": {"variant": config.variant.value, "params": model.param_count, "seed": seed}},
    )
    return model


def conv_bn(
    x: Tensor,
    weights: Mapping[str, np.ndarray],
    name: str,
    activation=None,
    stride: int = 1,
    depthwise: bool = False,
    eps: float = 1e-5,
) -> Tensor:
    """Convolution, batchnorm with stored statistics, optional activation"""
    w = weights[f"{name}.weight"]
    padding = w.shape[-1] // 2
    if depthwise:
        out = kernels.depthwise_conv2d(x, w, stride=stride, padding=padding)
    elif w.shape[-1] == 1 and stride == 1:
        out = kernels.pointwise_conv2d(x, w)
    else:
        out = kernels.conv2d(x, w, stride=stride, padding=padding)
    out = kernels.batchnorm_inference(
        out,
        weights[f"{name}.bn.running_mean"],
        weights[f"{name}.bn.running_var"],
        weights[f"{name}.bn.gamma"],
        weights[f"{name}.bn.beta"],
        eps,
    )
    return activation(out) if activation is not None else out


def mv2_block(
    x: Tensor,
    weights: Mapping[str, np.ndarray],
    name: str,
    stride: int,
    in_ch: int,
    out_ch: int,
    expansion: int,
    activation=kernels.relu,
    eps: float = 1e-5,
) -> Tensor:
    """Inverted residual: expand, depthwise 3x3, linear project"""
    if stride not in (1, 2):
        raise ConfigurationError(f"MV2 stride must be 1 or 2, got {stride}")
    x = kernels.as_tensor(x)
    if x.shape[1] != in_ch:
        raise DimensionError(f"{name} expects {in_ch} input channels", expected=(x.shape[0], in_ch) + x.shape[2:], actual=x.shape)
    h = x
    if expansion != 1:
        h = conv_bn(h, weights, f"{name}.expand", activation, eps=eps)
    h = conv_bn(h, weights, f"{name}.depthwise", activation, stride=stride, depthwise=True, eps=eps)
    h = conv_bn(h, weights, f"{name}.project", None, eps=eps)
    if h.shape[1] != out_ch:
        raise DimensionError(f"{name} projects to the wrong channel count", expected=(out_ch,), actual=(h.shape[1],))
    if stride == 1 and in_ch == out_ch:
        h = x + h
    return h


def transformer_layer(
    seq: PatchSequence,
    weights: Mapping[str, np.ndarray],
    name: str,
    heads: int,
    activation=kernels.relu,
) -> PatchSequence:
    """Pre-norm encoder layer: attention and feed-forward, each residual"""
    normed = kernels.layernorm(seq, weights[f"{name}.norm1.gamma"], weights[f"{name}.norm1.beta"], LAYERNORM_EPS)
    attended = kernels.multihead_self_attention(
        normed,
        weights[f"{name}.attn.q.weight"],
        weights[f"{name}.attn.k.weight"],
        weights[f"{name}.attn.v.weight"],
        weights[f"{name}.attn.out.weight"],
        heads,
        bo=weights[f"{name}.attn.out.bias"],
    )
    tokens = seq.tokens + attended.tokens
    normed = kernels.layernorm(tokens, weights[f"{name}.norm2.gamma"], weights[f"{name}.norm2.beta"], LAYERNORM_EPS)
    hidden = activation(kernels.linear(normed, weights[f"{name}.ffn.fc1.weight"], weights[f"{name}.ffn.fc1.bias"]))
    tokens = tokens + kernels.linear(hidden, weights[f"{name}.ffn.fc2.weight"], weights[f"{name}.ffn.fc2.bias"])
    return seq.with_tokens(tokens)


def meter_block(
    x: Tensor,
    weights: Mapping[str, np.ndarray],
    spec: MeterBlockSpec,
    activation=kernels.relu,
    eps: float = 1e-5,
    trace: Optional[List[Tuple[str, Tuple[int, ...]]]] = None,
) -> Tensor:
    """Local conv block, one transformer layer over folded patches, input concat, fuse.

    When ``trace`` is a list, (stage, shape) pairs are appended as the block runs.
    """
    x = kernels.as_tensor(x)
    n = spec.name
    if x.shape[1] != spec.channels:
        raise DimensionError(f"{n} expects {spec.channels} channels", expected=(x.shape[0], spec.channels) + x.shape[2:], actual=x.shape)

    def record(stage: str, shape) -> None:
        if trace is not None:
            trace.append((stage, tuple(shape)))

    record("input", x.shape)
    h = conv_bn(x, weights, f"{n}.local.depthwise", activation, depthwise=True, eps=eps)
    h = conv_bn(h, weights, f"{n}.local.pointwise", activation, eps=eps)
    record("local", h.shape)
    seq = kernels.unfold(h, spec.patch)
    record("unfold", seq.shape)
    seq = transformer_layer(seq, weights, f"{n}.transformer", spec.heads, activation)
    record("transformer", seq.shape)
    t = kernels.fold(seq)
    merged = kernels.concat_channels(x, t)
    record("concat", merged.shape)
    h = conv_bn(merged, weights, f"{n}.fuse", activation, eps=eps)
    record("fuse", h.shape)
    h = conv_bn(h, weights, f"{n}.out.depthwise", activation, depthwise=True, eps=eps)
    h = conv_bn(h, weights, f"{n}.out.pointwise", activation, eps=eps)
    record("output", h.shape)
    return h


def pad_to_working(image: Tensor, size: Tuple[int, int]) -> Tensor:
    """Replicate the bottom rows and right columns up to the working size"""
    h, w = image.shape[2:]
    ph, pw = size[0] - h, size[1] - w
    if ph == 0 and pw == 0:
        return image
    return np.pad(image, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")


def encoder_forward(model: MeterModel, image: Tensor) -> Tuple[Tensor, List[Tensor]]:
    """Bottleneck at 1/16 of the working size and skips at 1/2, 1/4, 1/8"""
    cfg = model.config
    x = kernels.as_tensor(image, "image")
    h, w = cfg.input_size
    if x.shape[1] != 3 or x.shape[2:] != (h, w):
        raise DimensionError("image does not match the configured input size", expected=(x.shape[0], 3, h, w), actual=x.shape)
    c1, c2, c3, c4, c5 = cfg.channels[:5]
    d4, d5 = cfg.transformer_dims
    e = cfg.mv2_expansion
    wts, act, eps = model.weights, model._activation, cfg.bn_eps

    x = pad_to_working(x, cfg.working_size)
    x = conv_bn(x, wts, "encoder.stem", act, stride=2, eps=eps)
    half = mv2_block(x, wts, "encoder.stage1.mv2", 1, c1, c2, e, act, eps)
    x = mv2_block(half, wts, "encoder.stage2.mv2_0", 2, c2, c3, e, act, eps)
    x = mv2_block(x, wts, "encoder.stage2.mv2_1", 1, c3, c3, e, act, eps)
    quarter = mv2_block(x, wts, "encoder.stage2.mv2_2", 1, c3, c3, e, act, eps)
    x = mv2_block(quarter, wts, "encoder.stage3.mv2", 2, c3, c4, e, act, eps)
    eighth = meter_block(x, wts, _meter_spec(cfg, "encoder.stage3.meter", c4, d4), act, eps)
    x = mv2_block(eighth, wts, "encoder.stage4.mv2", 2, c4, c5, e, act, eps)
    x = meter_block(x, wts, _meter_spec(cfg, "encoder.stage4.meter", c5, d5), act, eps)
    bottleneck = conv_bn(x, wts, "encoder.head", act, eps=eps)
    return bottleneck, [half, quarter, eighth]


def decoder_forward(model: MeterModel, bottleneck: Tensor, skips: Sequence[Tensor]) -> DepthMap:
    """Three x2 upsampling blocks with skip concat, then a 1-channel head"""
    cfg = model.config
    c2, c3, c4, c6 = (cfg.channels[i] for i in (1, 2, 3, 5))
    wh, ww = cfg.working_size
    b = bottleneck.shape[0]
    expected = (b, c6, wh // 16, ww // 16)
    if tuple(bottleneck.shape) != expected:
        raise DimensionError("bottleneck shape does not match the model", expected=expected, actual=bottleneck.shape)
    if len(skips) != 3:
        raise DimensionError("decoder needs three skip tensors", expected=(3,), actual=(len(skips),))
    for skip, ch, scale in zip(skips, (c2, c3, c4), (2, 4, 8)):
        want = (b, ch, wh // scale, ww // scale)
        if tuple(skip.shape) != want:
            raise DimensionError("skip tensor shape does not match the model", expected=want, actual=skip.shape)
    wts, act, eps = model.weights, model._activation, cfg.bn_eps

    x = conv_bn(bottleneck, wts, "decoder.conv_in", act, eps=eps)
    for name, skip in (("decoder.up1", skips[2]), ("decoder.up2", skips[1]), ("decoder.up3", skips[0])):
        x = kernels.transposed_conv2d(x, wts[f"{name}.tconv.weight"], wts[f"{name}.tconv.bias"])
        x = kernels.concat_channels(x, skip)
        x = conv_bn(x, wts, f"{name}.conv.depthwise", act, depthwise=True, eps=eps)
        x = conv_bn(x, wts, f"{name}.conv.pointwise", act, eps=eps)
    x = kernels.pointwise_conv2d(x, wts["decoder.conv_out.weight"], wts["decoder.conv_out.bias"])

    oh, ow = cfg.output_size
    lo, hi = cfg.depth_range
    values = np.clip(x[:, :, :oh, :ow], np.float32(lo), np.float32(hi))
    return DepthMap(np.ascontiguousarray(values, dtype=np.float32))


def forward(model: MeterModel, image: Tensor) -> DepthMap:
    bottleneck, skips = encoder_forward(model, image)
    return decoder_forward(model, bottleneck, skips)
