"""Layer/model representation, deterministic forward pass, and the
MAC/memory/cycle complexity report.

Models are immutable after construction; construction validates layer
kinds, name uniqueness, and shape compatibility by propagating the
per-sample input shape through every layer.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

from . import tensor_ops as T
from .errors import ConfigError, DimensionError, ModelValidationError
from .tensor_ops import Tensor

__all__ = [
    "LayerSpec",
    "Model",
    "LayerComplexity",
    "ComplexityReport",
    "dense",
    "conv",
    "relu_layer",
    "maxpool_layer",
    "flatten_layer",
    "forward",
    "complexity",
    "cycle_ratio",
    "set_layer_weights",
]

LAYER_KINDS = ("dense", "conv2d", "relu", "maxpool2d", "flatten")
WEIGHTED_KINDS = ("dense", "conv2d")


@dataclass(frozen=True)
class LayerSpec:
    """One layer description: kind, optional parameters, hyperparameters.

    dense weights are [in_features, out_features]; conv2d weights are
    [out_channels, in_channels, KH, KW].
    """

    kind: str
    name: str
    weights: Optional[Tensor] = None
    bias: Optional[Tensor] = None
    stride: Optional[int] = None
    padding: Optional[int] = None
    kernel: Optional[int] = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ModelValidationError(f"layer '{self.name}': unknown kind '{self.kind}'")
        if (self.weights is not None) != (self.kind in WEIGHTED_KINDS):
            raise ModelValidationError(
                f"layer '{self.name}': weights must be present iff kind is dense/conv2d"
            )
        if self.bias is not None and self.kind not in WEIGHTED_KINDS:
            raise ModelValidationError(f"layer '{self.name}': bias on a parameter-free layer")
        if self.kind == "dense" and len(self.weights.shape) != 2:
            raise ModelValidationError(f"layer '{self.name}': dense weights must be rank-2")
        if self.kind == "conv2d":
            if len(self.weights.shape) != 4:
                raise ModelValidationError(f"layer '{self.name}': conv2d weights must be rank-4")
            if self.stride is None or self.stride < 1 or self.padding is None or self.padding < 0:
                raise ModelValidationError(f"layer '{self.name}': conv2d needs stride >= 1, padding >= 0")
        if self.kind == "maxpool2d":
            if self.kernel is None or self.kernel < 1 or self.stride is None or self.stride < 1:
                raise ModelValidationError(f"layer '{self.name}': maxpool2d needs kernel and stride >= 1")

    @property
    def has_weights(self) -> bool:
        return self.kind in WEIGHTED_KINDS


def dense(name: str, weights, bias=None) -> LayerSpec:
    return LayerSpec("dense", name, weights=T._as_tensor(weights), bias=None if bias is None else T._as_tensor(bias))


def conv(name: str, weights, bias=None, stride: int = 1, padding: int = 0) -> LayerSpec:
    return LayerSpec(
        "conv2d",
        name,
        weights=T._as_tensor(weights),
        bias=None if bias is None else T._as_tensor(bias),
        stride=stride,
        padding=padding,
    )


def relu_layer(name: str) -> LayerSpec:
    return LayerSpec("relu", name)


def maxpool_layer(name: str, kernel: int, stride: int) -> LayerSpec:
    return LayerSpec("maxpool2d", name, kernel=kernel, stride=stride)


def flatten_layer(name: str) -> LayerSpec:
    return LayerSpec("flatten", name)


def _propagate_one(layer: LayerSpec, shape: tuple[int, ...]) -> tuple[int, ...]:
    """Per-sample output shape of `layer` applied to per-sample `shape`."""
    if layer.kind == "dense":
        if len(shape) != 1:
            raise ModelValidationError(f"layer '{layer.name}': dense expects a flat input, got {shape}")
        fin, fout = layer.weights.shape
        if shape[0] != fin:
            raise ModelValidationError(
                f"layer '{layer.name}': dense expects {fin} features, got {shape[0]}"
            )
        if layer.bias is not None and layer.bias.shape != (fout,):
            raise ModelValidationError(f"layer '{layer.name}': bias shape {layer.bias.shape} != ({fout},)")
        return (fout,)
    if layer.kind == "conv2d":
        if len(shape) != 3:
            raise ModelValidationError(f"layer '{layer.name}': conv2d expects CHW input, got {shape}")
        d, c, kh, kw = layer.weights.shape
        cin, h, w = shape
        if cin != c:
            raise ModelValidationError(
                f"layer '{layer.name}': conv2d expects {c} input channels, got {cin}"
            )
        h_out = (h + 2 * layer.padding - kh) // layer.stride + 1
        w_out = (w + 2 * layer.padding - kw) // layer.stride + 1
        if h_out < 1 or w_out < 1:
            raise ModelValidationError(f"layer '{layer.name}': kernel does not fit {h}x{w} input")
        if layer.bias is not None and layer.bias.shape != (d,):
            raise ModelValidationError(f"layer '{layer.name}': bias shape {layer.bias.shape} != ({d},)")
        return (d, h_out, w_out)
    if layer.kind == "relu":
        return shape
    if layer.kind == "maxpool2d":
        if len(shape) != 3:
            raise ModelValidationError(f"layer '{layer.name}': maxpool2d expects CHW input, got {shape}")
        c, h, w = shape
        if h < layer.kernel or w < layer.kernel:
            raise ModelValidationError(f"layer '{layer.name}': window {layer.kernel} larger than {h}x{w}")
        h_out = (h - layer.kernel) // layer.stride + 1
        w_out = (w - layer.kernel) // layer.stride + 1
        return (c, h_out, w_out)
    if layer.kind == "flatten":
        n = 1
        for d in shape:
            n *= d
        return (n,)
    raise ModelValidationError(f"layer '{layer.name}': unknown kind '{layer.kind}'")


@dataclass(frozen=True)
class Model:
    """Ordered sequence of layers plus the per-sample input shape."""

    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        if any(d <= 0 for d in self.input_shape) or not self.input_shape:
            raise ModelValidationError(f"input_shape must be positive dims, got {self.input_shape}")
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ModelValidationError("layer names must be unique within a model")
        self.propagate()  # raises if consecutive shapes are incompatible

    def propagate(self) -> list[tuple[int, ...]]:
        """Per-sample shapes after each layer, starting from input_shape."""
        shapes = []
        shape = self.input_shape
        for layer in self.layers:
            shape = _propagate_one(layer, shape)
            shapes.append(shape)
        return shapes

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise ModelValidationError(f"no layer named '{name}'")

    def weighted_layers(self) -> list[LayerSpec]:
        return [layer for layer in self.layers if layer.has_weights]


def forward(model: Model, batch: Tensor) -> Tensor:
    """Apply every layer in order to a batch (leading dim free)."""
    if tuple(batch.shape[1:]) != model.input_shape:
        raise DimensionError(
            f"batch per-sample shape {tuple(batch.shape[1:])} != model input shape {model.input_shape}"
        )
    x = batch
    for layer in model.layers:
        try:
            x = _apply(layer, x)
        except DimensionError as exc:
            raise DimensionError(f"layer '{layer.name}': {exc}") from exc
    return x


def _apply(layer: LayerSpec, x: Tensor) -> Tensor:
    if layer.kind == "dense":
        out = T.matmul(x, layer.weights)
        return out if layer.bias is None else T.add_bias(out, layer.bias)
    if layer.kind == "conv2d":
        out = T.conv2d(x, layer.weights, stride=layer.stride, padding=layer.padding)
        return out if layer.bias is None else T.add_bias(out, layer.bias)
    if layer.kind == "relu":
        return T.relu(x)
    if layer.kind == "maxpool2d":
        return T.maxpool2d(x, layer.kernel, layer.stride)
    return T.flatten(x)


def set_layer_weights(model: Model, name: str, w: Tensor) -> Model:
    """Copy of `model` with the named layer's weights replaced."""
    target = model.layer(name)  # raises on unknown name
    if not target.has_weights:
        raise ModelValidationError(f"layer '{name}' has no weights to replace")
    if w.shape != target.weights.shape:
        raise DimensionError(f"layer '{name}': weight shape {w.shape} != {target.weights.shape}")
    layers = tuple(replace(l, weights=w) if l.name == name else l for l in model.layers)
    return Model(layers, model.input_shape)


@dataclass(frozen=True)
class LayerComplexity:
    name: str
    kind: str
    mac_count: int
    memory_words: int


@dataclass(frozen=True)
class ComplexityReport:
    layers: tuple[LayerComplexity, ...]
    total_macs: int
    total_memory_words: int
    cycle_ratio: Fraction
    weight_bits: int
    act_bits: int


def _lane_packing(bits: int) -> int:
    # Sub-byte operands pack floor(8/bits) to a byte lane of the MAC array.
    return 8 // bits if bits < 8 else 1


def cycle_ratio(weight_bits: int, act_bits: int) -> Fraction:
    """Cycles per MAC relative to the floating-point baseline.

    One fixed-point MAC costs proportionally to the product of its operand
    widths; the baseline float multiply works on the 24-bit fp32
    significand, so 8w/8a lands at 1/9 and 8w/16a at 2/9. Sub-byte
    operands additionally pack floor(8/bits) values per byte lane.
    """
    for bits in (weight_bits, act_bits):
        if not 4 <= bits <= 32:
            raise ConfigError(f"bit width must be in [4, 32], got {bits}")
    base = Fraction(weight_bits * act_bits, 24 * 24)
    return base / (_lane_packing(weight_bits) * _lane_packing(act_bits))


def complexity(model: Model, weight_bits: int, act_bits: int) -> ComplexityReport:
    """Per-layer MAC count P*C*D*H*W and memory C*D*H*W (weighted layers).

    Dense layers count as conv with H=W=1, D=out_features, C=in_features,
    P=1. P (output feature-map size) comes from shape propagation.
    """
    ratio = cycle_ratio(weight_bits, act_bits)
    shapes = model.propagate()
    rows = []
    for layer, out_shape in zip(model.layers, shapes):
        if layer.kind == "dense":
            fin, fout = layer.weights.shape
            mac = fin * fout
            mem = fin * fout
        elif layer.kind == "conv2d":
            d, c, kh, kw = layer.weights.shape
            p = out_shape[1] * out_shape[2]
            mac = p * c * d * kh * kw
            mem = c * d * kh * kw
        else:
            mac = 0
            mem = 0
        rows.append(LayerComplexity(layer.name, layer.kind, mac, mem))
    return ComplexityReport(
        layers=tuple(rows),
        total_macs=sum(r.mac_count for r in rows),
        total_memory_words=sum(r.memory_words for r in rows),
        cycle_ratio=ratio,
        weight_bits=weight_bits,
        act_bits=act_bits,
    )
