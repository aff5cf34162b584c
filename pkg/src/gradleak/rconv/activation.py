"""Activation handling from the attacker's side, where only the outputs ``X = A(O)`` are known."""

import numpy as np
from scipy.special import logit

from ..errors import InvalidActivationOutput
from ..tensor import LEAKY_SLOPE, check_activation


def _relu_like(kind, alpha):
    return kind == "relu" or (kind == "prelu" and alpha == 0.0)


# Closed output ranges: float64 saturates onto the bounds (tanh(20.0) == 1.0).
def _output_range(kind, alpha):
    if kind == "sigmoid":
        return 0.0, 1.0
    if kind == "tanh":
        return -1.0, 1.0
    if kind == "arctan":
        return -np.pi / 2, np.pi / 2
    if kind == "softplus" or _relu_like(kind, alpha):
        return 0.0, np.inf
    if kind == "elu":
        return -alpha, np.inf
    return -np.inf, np.inf


def _check_domain(x, kind, alpha):
    lo, hi = _output_range(kind, alpha)
    bad = (x < lo) | (x > hi) | np.isnan(x)
    if np.any(bad):
        value = x[bad].ravel()[0]
        raise InvalidActivationOutput(f"{value!r} is not a possible {kind} output")


def activation_derivative_from_output(x, kind, alpha=None):
    """``A'(O)`` expressed through the activation output ``x`` alone."""
    alpha = check_activation(kind, alpha)
    x = np.asarray(x, dtype=np.float64)
    _check_domain(x, kind, alpha)
    if kind == "sigmoid":
        return x * (1.0 - x)
    if kind == "tanh":
        return 1.0 - x * x
    if kind == "arctan":
        return 1.0 / (1.0 + np.tan(x) ** 2)
    if kind == "softplus":
        return -np.expm1(-x)
    if _relu_like(kind, alpha):
        return (x > 0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(x >= 0, 1.0, LEAKY_SLOPE)
    if kind == "prelu":
        return np.where(x >= 0, 1.0, alpha)
    return np.where(x >= 0, 1.0, x + alpha)


def propagate_gradient_through_activation(dx, x, kind, alpha=None):
    dx = np.asarray(dx, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if dx.shape != x.shape:
        raise ValueError(f"gradient shape {dx.shape} != activation output shape {x.shape}")
    return dx * activation_derivative_from_output(x, kind, alpha)


MIN_SLOPE = 1e-3


def invert_activation_partial(x, kind, alpha=None, min_slope=MIN_SLOPE):
    """Recover pre-activations where possible.

    Returns ``(o, known)``. Entries that cannot be recovered are ``nan`` in
    ``o`` and ``False`` in ``known``: ReLU outputs equal to zero, and outputs
    where the activation's slope is below ``min_slope`` (saturated sigmoid or
    tanh), since inverting there amplifies rounding error by ``1/slope``.
    """
    alpha = check_activation(kind, alpha)
    x = np.asarray(x, dtype=np.float64)
    _check_domain(x, kind, alpha)
    known = activation_derivative_from_output(x, kind, alpha) >= min_slope
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "sigmoid":
            o = logit(x)
        elif kind == "tanh":
            o = np.arctanh(x)
        elif kind == "arctan":
            o = np.tan(x)
        elif kind == "softplus":
            # log(exp(x) - 1) without overflow for large x
            o = x + np.log(-np.expm1(-x))
        elif _relu_like(kind, alpha):
            o = x.copy()
        elif kind == "leaky_relu":
            o = np.where(x >= 0, x, x / LEAKY_SLOPE)
        elif kind == "prelu":
            o = np.where(x >= 0, x, x / alpha)
        else:
            o = np.where(x >= 0, x, np.log1p(np.maximum(np.minimum(x, 0.0) / alpha, -1.0)))
    known &= np.isfinite(o)
    return np.where(known, o, np.nan), known


def snap_activation_output(x, kind, alpha=None, rtol=1e-8):
    """Clean a least-squares estimate of an activation output before it is reused.

    Entries within ``tol = rtol * max(1, max|x|)`` of a bound of the output
    range are moved onto it: ReLU-like zeros become exactly zero (so derivative
    and known-output masks are not decided by rounding noise) and saturated
    values are pulled back into range. Entries further out are left alone and
    will fail the domain check downstream.
    """
    alpha = check_activation(kind, alpha)
    x = np.array(x, dtype=np.float64)
    if not x.size:
        return x
    tol = rtol * max(1.0, float(np.abs(x).max()))
    lo, hi = _output_range(kind, alpha)
    if _relu_like(kind, alpha):
        x[np.abs(x) <= tol] = 0.0
    if np.isfinite(lo):
        x[(x < lo) & (x >= lo - tol)] = lo
    if np.isfinite(hi):
        x[(x > hi) & (x <= hi + tol)] = hi
    return x
