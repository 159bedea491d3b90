"""Dense tensor type and the numeric kernels a forward pass needs.

Scalars are float64 throughout; quantized weights are grid-constrained
reals, not integers. Layout is row-major, images are NCHW. All kernels
are pure functions over immutable inputs.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError

__all__ = [
    "Tensor",
    "matmul",
    "conv2d",
    "relu",
    "maxpool2d",
    "flatten",
    "add_bias",
]


class Tensor:
    """Immutable dense n-d array of finite float64 scalars.

    The backing array is copied on construction and marked read-only, so
    values are safely shareable across threads.
    """

    __slots__ = ("_data",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, order="C")
        if arr.ndim == 0:
            raise DimensionError("tensor rank must be >= 1, got a scalar")
        if any(d <= 0 for d in arr.shape):
            raise DimensionError(f"tensor dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor scalars must be finite (no NaN/Inf)")
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        """Read-only backing array."""
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def size(self) -> int:
        return self._data.size

    def ravel(self) -> np.ndarray:
        """Flat row-major view of the data."""
        return self._data.ravel()

    def tolist(self):
        return self._data.tolist()

    def equals(self, other: "Tensor") -> bool:
        """Bit-exact equality (shape and every element)."""
        return self.shape == other.shape and np.array_equal(self._data, other._data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def _as_tensor(values) -> Tensor:
    if isinstance(values, Tensor):
        return values
    return Tensor(values)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return Tensor(a.data @ b.data)


def conv2d(x: Tensor, weights: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation (no kernel flip) over an NCHW batch.

    weights has shape [D, C, KH, KW]; output spatial size is
    floor((in + 2*padding - kernel) / stride) + 1.
    """
    if len(x.shape) != 4 or len(weights.shape) != 4:
        raise DimensionError(f"conv2d needs NCHW input and DCHW weights, got {x.shape} and {weights.shape}")
    if stride < 1 or padding < 0:
        raise DimensionError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    n, c, h, w = x.shape
    d, cw, kh, kw = weights.shape
    if c != cw:
        raise DimensionError(f"conv2d channel mismatch: input has {c} channels, weights expect {cw}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise DimensionError(
            f"conv2d kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((n, d, h_out, w_out))
    # Fixed (ki, kj) accumulation order keeps the float sum bit-reproducible.
    for ki in range(kh):
        for kj in range(kw):
            patch = xp[:, :, ki : ki + stride * h_out : stride, kj : kj + stride * w_out : stride]
            out += np.einsum("nchw,dc->ndhw", patch, weights.data[:, :, ki, kj])
    return Tensor(out)


def relu(t: Tensor) -> Tensor:
    """Elementwise max(0, x)."""
    return Tensor(np.maximum(0.0, t.data))


def maxpool2d(t: Tensor, kernel: int, stride: int) -> Tensor:
    """Windowed max over the spatial dims of an NCHW batch."""
    if len(t.shape) != 4:
        raise DimensionError(f"maxpool2d needs an NCHW input, got {t.shape}")
    if kernel < 1 or stride < 1:
        raise DimensionError(f"maxpool2d needs kernel >= 1 and stride >= 1, got {kernel}, {stride}")
    n, c, h, w = t.shape
    if h < kernel or w < kernel:
        raise DimensionError(f"maxpool2d window {kernel} larger than input {h}x{w}")
    h_out = (h - kernel) // stride + 1
    w_out = (w - kernel) // stride + 1
    out = np.full((n, c, h_out, w_out), -np.inf)
    for ki in range(kernel):
        for kj in range(kernel):
            window = t.data[:, :, ki : ki + stride * h_out : stride, kj : kj + stride * w_out : stride]
            np.maximum(out, window, out=out)
    return Tensor(out)


def flatten(t: Tensor) -> Tensor:
    """Collapse everything but the leading (batch) dim."""
    if len(t.shape) < 2:
        raise DimensionError(f"flatten needs rank >= 2, got {t.shape}")
    n = t.shape[0]
    return Tensor(t.data.reshape(n, -1))


def add_bias(t: Tensor, b: Tensor) -> Tensor:
    """Broadcast add: over the last dim for rank-2, over channels for NCHW."""
    if len(b.shape) != 1:
        raise DimensionError(f"bias must be rank-1, got {b.shape}")
    if len(t.shape) == 2:
        if t.shape[1] != b.shape[0]:
            raise DimensionError(f"bias length {b.shape[0]} does not match feature dim of {t.shape}")
        return Tensor(t.data + b.data)
    if len(t.shape) == 4:
        if t.shape[1] != b.shape[0]:
            raise DimensionError(f"bias length {b.shape[0]} does not match channel dim of {t.shape}")
        return Tensor(t.data + b.data[:, None, None])
    raise DimensionError(f"add_bias supports rank-2 or NCHW tensors, got {t.shape}")
