"""Input and input-gradient recovery at the dense layer."""

import numpy as np

from ..errors import AllBiasGradientsZero, ShapeError

EPS_DIV = 1e-12


def _check_pair(dw, db):
    dw = np.asarray(dw, dtype=np.float64)
    db = np.asarray(db, dtype=np.float64)
    if dw.ndim != 2 or db.shape != (dw.shape[0],):
        raise ShapeError(f"dense gradient shapes {dw.shape} and {db.shape} do not agree")
    return dw, db


def recover_fc_input(dw, db, node=None, average=False, eps_div=EPS_DIV):
    """Recover the dense layer's input from its weight and bias gradients.

    Since ``dl/dW[m, n] = dl/db[m] * x[n]``, every output node ``m`` with a
    non-zero bias gradient yields the full input as ``dW[m] / db[m]``. By
    default the node with the largest ``|db|`` is used; ``node`` forces a
    specific one and ``average`` takes the mean over all qualifying nodes.

    Returns ``(x, node)`` where ``node`` is the node used (``None`` when
    averaging).
    """
    dw, db = _check_pair(dw, db)
    mag = np.abs(db)
    qualifying = mag > eps_div
    if not qualifying.any():
        raise AllBiasGradientsZero(
            f"all {db.size} bias gradients are within {eps_div:g} of zero")
    if average:
        rows = np.flatnonzero(qualifying)
        return (dw[rows] / db[rows, None]).mean(axis=0), None
    if node is None:
        node = int(np.argmax(mag))
    elif not qualifying[node]:
        raise ValueError(f"node {node} has bias gradient {db[node]!r}; cannot divide by it")
    return dw[node] / db[node], node


def fc_input_gradient(dw, db, weights):
    """``dl/dx[n] = sum_m dl/db[m] * W[m, n]``; ``dw`` is only used for shape checking."""
    dw, db = _check_pair(dw, db)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != dw.shape:
        raise ShapeError(f"dense weights {weights.shape} != gradient {dw.shape}")
    return weights.T @ db
