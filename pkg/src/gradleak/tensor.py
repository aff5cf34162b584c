"""Forward primitives: square 2-D convolution, dense layer, elementwise activations.

Tensors are plain ``float64`` numpy arrays. Convolutions work on a single
sample of shape (channels, H, H) with zero padding.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import kernels
from .errors import ShapeError

ACTIVATIONS = ("sigmoid", "tanh", "arctan", "softplus",
               "relu", "leaky_relu", "prelu", "elu")
LEAKY_SLOPE = 0.01


@dataclass(frozen=True)
class ConvGeometry:
    """Shape parameters of one square convolution.

    ``in_size`` and ``kernel`` are side lengths; ``padding`` is symmetric zero
    padding. ``(in_size + 2*padding - kernel)`` must be a non-negative multiple
    of ``stride``.
    """

    in_channels: int
    in_size: int
    filters: int
    kernel: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for name in ("in_channels", "in_size", "filters", "kernel", "stride"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ShapeError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.padding, (int, np.integer)) or self.padding < 0:
            raise ShapeError(f"padding must be a non-negative integer, got {self.padding!r}")
        span = self.in_size + 2 * self.padding - self.kernel
        if span < 0:
            raise ShapeError(
                f"kernel {self.kernel} larger than padded input {self.in_size + 2 * self.padding}")
        if span % self.stride:
            raise ShapeError(
                f"(H + 2P - K) = {span} is not divisible by stride {self.stride}")

    @property
    def out_size(self):
        return (self.in_size + 2 * self.padding - self.kernel) // self.stride + 1

    @property
    def padded_size(self):
        return self.in_size + 2 * self.padding

    @property
    def input_shape(self):
        return (self.in_channels, self.in_size, self.in_size)

    @property
    def output_shape(self):
        return (self.filters, self.out_size, self.out_size)

    @property
    def weight_shape(self):
        return (self.filters, self.in_channels, self.kernel, self.kernel)

    @property
    def n_inputs(self):
        return self.in_channels * self.in_size ** 2

    @property
    def n_outputs(self):
        return self.filters * self.out_size ** 2

    @property
    def n_weights(self):
        return self.filters * self.in_channels * self.kernel ** 2


def as_tensor(values, shape=None):
    """Copy ``values`` into a float64 array, optionally checking its shape and finiteness."""
    arr = np.array(values, dtype=np.float64)
    if shape is not None and arr.shape != tuple(shape):
        raise ShapeError(f"expected shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite entries")
    return arr


def pad_input(x, padding):
    if padding == 0:
        return np.ascontiguousarray(x, dtype=np.float64)
    return np.pad(x, ((0, 0), (padding, padding), (padding, padding)))


def conv2d_forward(x, weights, bias, geom):
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if x.shape != geom.input_shape:
        raise ShapeError(f"conv input shape {x.shape} != {geom.input_shape}")
    if weights.shape != geom.weight_shape:
        raise ShapeError(f"conv weight shape {weights.shape} != {geom.weight_shape}")
    out = kernels.conv_forward(pad_input(x, geom.padding), np.ascontiguousarray(weights),
                               geom.stride)
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (geom.filters,):
            raise ShapeError(f"conv bias shape {bias.shape} != {(geom.filters,)}")
        out = out + bias[:, None, None]
    return out


def dense_forward(x, weights, bias):
    """``z = W x + b`` with ``W`` of shape (out_features, in_features)."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.ndim != 1 or weights.ndim != 2 or weights.shape[1] != x.size:
        raise ShapeError(f"dense weights {weights.shape} do not accept input {x.shape}")
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"dense bias shape {bias.shape} != {(weights.shape[0],)}")
    return weights @ x + bias


def check_activation(kind, alpha=None):
    """Validate an activation kind and return its normalised ``alpha`` (None if unused)."""
    if kind not in ACTIVATIONS:
        raise ValueError(f"unknown activation kind {kind!r}")
    if kind in ("prelu", "elu"):
        if alpha is None:
            raise ValueError(f"activation {kind!r} requires alpha")
        alpha = float(alpha)
        if not np.isfinite(alpha) or alpha < 0 or (kind == "elu" and alpha == 0):
            raise ValueError(f"invalid alpha {alpha!r} for {kind!r}")
        return alpha
    return None


def activation_apply(o, kind, alpha=None):
    alpha = check_activation(kind, alpha)
    o = np.asarray(o, dtype=np.float64)
    if kind == "sigmoid":
        return expit(o)
    if kind == "tanh":
        return np.tanh(o)
    if kind == "arctan":
        return np.arctan(o)
    if kind == "softplus":
        return np.logaddexp(0.0, o)
    if kind == "relu":
        return np.where(o > 0, o, 0.0)
    if kind == "leaky_relu":
        return np.where(o >= 0, o, LEAKY_SLOPE * o)
    if kind == "prelu":
        return np.where(o >= 0, o, alpha * o)
    return np.where(o >= 0, o, alpha * np.expm1(np.minimum(o, 0.0)))


def activation_derivative(o, kind, alpha=None):
    """Local derivative evaluated at the pre-activation ``o``.

    Piecewise kinds take the right derivative at 0, except ReLU which uses 0.
    """
    alpha = check_activation(kind, alpha)
    o = np.asarray(o, dtype=np.float64)
    if kind == "sigmoid":
        s = expit(o)
        return s * (1.0 - s)
    if kind == "tanh":
        return 1.0 - np.tanh(o) ** 2
    if kind == "arctan":
        return 1.0 / (1.0 + o * o)
    if kind == "softplus":
        return expit(o)
    if kind == "relu":
        return (o > 0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(o >= 0, 1.0, LEAKY_SLOPE)
    if kind == "prelu":
        return np.where(o >= 0, 1.0, alpha)
    return np.where(o >= 0, 1.0, alpha * np.exp(np.minimum(o, 0.0)))
