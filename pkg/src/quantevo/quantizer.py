"""Linear fixed-point quantization with nearest-neighbour rounding.

A scheme is total_bits split into sign + int_bits + frac_bits; the grid
step sigma = 2**-frac_bits is always an exact power of two, so every
grid value is exactly representable in float64 and the grid/idempotence
invariants hold bit-exactly. Only weights are quantized, never
activations or biases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .netgraph import Model, set_layer_weights
from .tensor_ops import Tensor

__all__ = [
    "QuantScheme",
    "QuantizedLayer",
    "derive_scheme",
    "quantize",
    "quantize_model",
    "clamp_to_range",
    "round_half_away",
]


@dataclass(frozen=True)
class QuantScheme:
    """Per-layer fixed-point parameters: 1 sign bit + int_bits + frac_bits."""

    total_bits: int
    int_bits: int
    frac_bits: int

    def __post_init__(self):
        if not 2 <= self.total_bits <= 32:
            raise ConfigError(f"total_bits must be in [2, 32], got {self.total_bits}")
        if self.frac_bits != self.total_bits - self.int_bits - 1:
            raise ConfigError(
                f"frac_bits must equal total_bits - int_bits - 1, got "
                f"{self.frac_bits} != {self.total_bits} - {self.int_bits} - 1"
            )
        # Keep sigma and 1/sigma normal floats; outside this the grid step
        # would underflow or overflow.
        if abs(self.frac_bits) > 1000:
            raise ConfigError(f"frac_bits {self.frac_bits} outside the representable float range")

    @property
    def sigma(self) -> float:
        """Quantization step (the LSB value), an exact power of two."""
        return 2.0 ** (-self.frac_bits)

    @property
    def mu(self) -> float:
        return 0.0

    @property
    def code_min(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def code_max(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    def to_dict(self) -> dict:
        return {
            "total_bits": self.total_bits,
            "int_bits": self.int_bits,
            "frac_bits": self.frac_bits,
            "sigma": self.sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantScheme":
        return cls(int(d["total_bits"]), int(d["int_bits"]), int(d["frac_bits"]))


@dataclass(frozen=True)
class QuantizedLayer:
    """Weights constrained to the scheme's grid and representable range."""

    scheme: QuantScheme
    weights: Tensor

    def __post_init__(self):
        codes = self.weights.data * 2.0**self.scheme.frac_bits
        if not np.array_equal(codes, np.round(codes)):
            raise ConfigError("quantized weights must be integer multiples of sigma")
        if codes.min() < self.scheme.code_min or codes.max() > self.scheme.code_max:
            raise ConfigError("quantized weights exceed the representable code range")

    def codes(self) -> np.ndarray:
        """Integer codes w / sigma as an int64 array."""
        return (self.weights.data * 2.0**self.scheme.frac_bits).astype(np.int64)


def derive_scheme(t: Tensor, total_bits: int) -> QuantScheme:
    """Scheme for a tensor: int_bits = ceil(log2(max |x|)), rest fractional.

    The all-zero tensor gets int_bits = 0 by convention (log2(0) is
    undefined and zero is representable under any scheme).
    """
    if not 2 <= total_bits <= 32:
        raise ConfigError(f"total_bits must be in [2, 32], got {total_bits}")
    peak = float(np.max(np.abs(t.data)))
    if peak == 0.0:
        int_bits = 0
    else:
        # frexp gives peak = m * 2**e with m in [0.5, 1); ceil(log2 peak)
        # is then e - 1 for exact powers of two and e otherwise. Exact
        # integer arithmetic, immune to log rounding near powers of two.
        m, e = math.frexp(peak)
        int_bits = e - 1 if m == 0.5 else e
    return QuantScheme(total_bits, int_bits, total_bits - int_bits - 1)


def round_half_away(y: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves away from zero (sign-symmetric)."""
    return np.where(y >= 0.0, np.floor(y + 0.5), np.ceil(y - 0.5))


def quantize(t: Tensor, scheme: QuantScheme) -> QuantizedLayer:
    """Map each element to its nearest grid point, saturating at the range.

    q = mu + sigma * round((x - mu) / sigma) with mu = 0; codes clamp into
    [-2**(B-1), 2**(B-1) - 1]. Total over finite tensors.
    """
    # x / sigma == x * 2**frac_bits is exact: multiplying by a power of two
    # only shifts the exponent.
    codes = round_half_away(t.data * 2.0**scheme.frac_bits)
    codes = np.clip(codes, scheme.code_min, scheme.code_max)
    # +0.0 normalizes any -0.0 from rounding negatives, keeping the byte
    # representation (not just the value) a pure function of the input.
    return QuantizedLayer(scheme, Tensor(codes * scheme.sigma + 0.0))


def clamp_to_range(code: int, scheme: QuantScheme) -> int:
    """Saturating clamp of an integer code into the representable range."""
    return min(max(int(code), scheme.code_min), scheme.code_max)


def quantize_model(model: Model, total_bits: int) -> tuple[Model, dict[str, QuantScheme]]:
    """Independently derive a scheme and quantize every weighted layer.

    Returns the quantized model and the scheme recorded per layer name.
    Biases stay in float.
    """
    weighted = model.weighted_layers()
    if not weighted:
        raise ConfigError("model has no weighted layers to quantize")
    schemes: dict[str, QuantScheme] = {}
    out = model
    for layer in weighted:
        scheme = derive_scheme(layer.weights, total_bits)
        ql = quantize(layer.weights, scheme)
        out = set_layer_weights(out, layer.name, ql.weights)
        schemes[layer.name] = scheme
    return out, schemes
