"""The honest client: one forward pass and exact backpropagation on a single sample."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import ShapeError
from .model import Activation, Conv, Dense, Flatten, GradientBundle, LayerParams
from .tensor import (activation_apply, activation_derivative, conv2d_forward,
                     dense_forward, pad_input)


@dataclass
class ForwardTrace:
    inputs: list
    outputs: list
    loss: Optional[float] = None

    @property
    def logits(self):
        return self.outputs[-1]


def _run_layer(layer, p, x):
    if isinstance(layer, Conv):
        return conv2d_forward(x, p.weights, p.bias, layer.geom)
    if isinstance(layer, Activation):
        return activation_apply(x, layer.kind, layer.alpha)
    if isinstance(layer, Flatten):
        return x.reshape(-1)
    return dense_forward(x, p.weights, p.bias)


def forward(arch, params, x, start=0):
    """Run the network on one sample.

    With ``start > 0``, ``x`` is taken as the input of layer ``start`` and the
    trace only covers the remaining layers.
    """
    x = np.asarray(x, dtype=np.float64)
    expected = arch.input_shape_of(start)
    if start == 0 and x.ndim == 4:
        raise ShapeError("batched input: only a single sample is supported")
    if x.shape != expected:
        raise ShapeError(f"input shape {x.shape} != {expected}")
    inputs, outputs = [], []
    for i in range(start, len(arch.layers)):
        inputs.append(x)
        x = _run_layer(arch.layers[i], params[i], x)
        outputs.append(x)
    return ForwardTrace(inputs, outputs)


def softmax_cross_entropy(logits, label):
    """Return ``(loss, dloss/dlogits)`` for a single integer class label."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.size:
        raise ValueError(f"label {label} out of range for {logits.size} classes")
    log_probs = logits - logsumexp(logits)
    probs = np.exp(log_probs)
    dlogits = probs.copy()
    dlogits[label] -= 1.0
    return float(-log_probs[label]), dlogits


def backpropagate(arch, params, trace, dlogits):
    """Chain rule through the traced network.

    Returns ``(param_grads, input_grads)``: per-layer :class:`LayerParams` of
    gradients (``None`` for parameter-free layers) and the gradient w.r.t. each
    layer's input.
    """
    n = len(arch.layers)
    if len(trace.inputs) != n or len(trace.outputs) != n:
        raise ShapeError(f"trace covers {len(trace.inputs)} layers, architecture has {n}")
    grad = np.asarray(dlogits, dtype=np.float64)
    if grad.shape != trace.logits.shape:
        raise ShapeError(f"dlogits shape {grad.shape} != logits {trace.logits.shape}")
    param_grads = [None] * n
    input_grads = [None] * n
    for i in range(n - 1, -1, -1):
        layer, x = arch.layers[i], trace.inputs[i]
        if isinstance(layer, Dense):
            param_grads[i] = LayerParams(np.outer(grad, x), grad.copy())
            grad = params[i].weights.T @ grad
        elif isinstance(layer, Flatten):
            grad = grad.reshape(x.shape)
        elif isinstance(layer, Activation):
            grad = grad * activation_derivative(x, layer.kind, layer.alpha)
        else:
            g = layer.geom
            xp = pad_input(x, g.padding)
            dw = kernels.conv_weight_grad(xp, grad, g.stride, g.kernel)
            db = grad.sum(axis=(1, 2)) if layer.bias else None
            param_grads[i] = LayerParams(dw, db)
            dxp = kernels.conv_input_grad(grad, params[i].weights, g.stride, g.padded_size)
            grad = dxp[:, g.padding:g.padding + g.in_size, g.padding:g.padding + g.in_size].copy()
        input_grads[i] = grad
    return param_grads, input_grads


def backward(arch, params, trace, dlogits, seed=None):
    param_grads, _ = backpropagate(arch, params, trace, dlogits)
    return GradientBundle(param_grads, arch.hash, seed, trace.loss)


def compute_gradients(arch, params, x, label, seed=None):
    """Forward + cross-entropy + backward; returns ``(bundle, trace)``."""
    trace = forward(arch, params, x)
    trace.loss, dlogits = softmax_cross_entropy(trace.logits, label)
    return backward(arch, params, trace, dlogits, seed), trace


def loss_at(arch, params, x, label, start=0):
    """Cross-entropy loss with ``x`` fed in as the input of layer ``start``."""
    trace = forward(arch, params, x, start)
    return softmax_cross_entropy(trace.logits, label)[0]
