"""Linear constraints on a conv layer's input.

Unknowns are the non-padded input entries in (channel, row, col) order.
Gradient rows come from ``dl/dW = sum dO * X`` (one row per weight), weight
rows from the forward pass ``O = W * X + b`` (one row per known output).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .. import kernels
from .maps import build_contribution_maps


@dataclass(frozen=True)
class GradientConstraints:
    """One row per weight entry, ordered like ``dW.ravel()``.

    The coefficient of ``X[c, q]`` in the row of weight ``(f, c, k)`` does not
    depend on ``c``, so the matrix is a per-channel block repeated on the
    diagonal: ``block`` is (F*K*K, H*H) and ``rhs`` is (F*K*K, N), column ``c``
    holding ``dW[:, c]``.
    """

    block: np.ndarray
    rhs: np.ndarray
    n_channels: int
    n_filters: int

    @property
    def n_spatial(self):
        return self.block.shape[1]

    @property
    def n_rows(self):
        return self.block.shape[0] * self.n_channels

    @property
    def n_unknowns(self):
        return self.n_spatial * self.n_channels

    def _unstack(self, per_channel):
        # (F*KK, N) -> dW order (F, N, KK)
        f = self.n_filters
        return per_channel.reshape(f, -1, self.n_channels).transpose(0, 2, 1).ravel()

    def rhs_vector(self):
        return self._unstack(self.rhs)

    def matvec(self, x):
        return self._unstack(self.block @ np.reshape(x, (self.n_channels, -1)).T)

    def dense(self):
        f, n, hh = self.n_filters, self.n_channels, self.n_spatial
        kk = self.block.shape[0] // f
        m = np.zeros((f, n, kk, n, hh))
        blk = self.block.reshape(f, kk, hh)
        for c in range(n):
            m[:, c, :, c, :] = blk
        return m.reshape(f * n * kk, n * hh), self.rhs_vector()


@dataclass(frozen=True)
class WeightConstraints:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    outputs: np.ndarray  # flat output index of each row

    @property
    def n_rows(self):
        return self.matrix.shape[0]

    def matvec(self, x):
        return self.matrix @ x

    def dense(self):
        return self.matrix.toarray(), self.rhs


def build_gradient_constraints(d_out, dw, maps):
    g = maps.geom
    d_out = np.ascontiguousarray(d_out, dtype=np.float64)
    dw = np.asarray(dw, dtype=np.float64)
    if d_out.shape != g.output_shape or dw.shape != g.weight_shape:
        raise ValueError(f"gradient shapes {d_out.shape}, {dw.shape} do not match {g}")
    block = kernels.gradient_block(d_out.reshape(g.filters, -1), maps.q, maps.p, maps.k,
                                   maps.n_kernel, maps.n_spatial)
    rhs = dw.reshape(g.filters, g.in_channels, -1).transpose(0, 2, 1).reshape(-1, g.in_channels)
    return GradientConstraints(block, np.ascontiguousarray(rhs), g.in_channels, g.filters)


def build_weight_constraints(o, known, weights, bias, geom, maps=None):
    """Rows ``sum w * X[patch] = O - b`` for every output marked ``known``."""
    maps = maps or build_contribution_maps(geom)
    o = np.asarray(o, dtype=np.float64)
    known = np.asarray(known, dtype=bool)
    if o.shape != geom.output_shape or known.shape != geom.output_shape:
        raise ValueError(f"output shape {o.shape} != {geom.output_shape}")
    outputs = np.flatnonzero(known.ravel())
    row_f, row_p = np.divmod(outputs, maps.n_out_spatial)
    rhs = o.ravel()[outputs]
    if bias is not None:
        rhs = rhs - np.asarray(bias, dtype=np.float64)[row_f]
    w = np.ascontiguousarray(weights, dtype=np.float64).reshape(
        geom.filters, geom.in_channels, maps.n_kernel)
    rows, cols, vals = kernels.weight_rows(w, row_f, row_p, maps.q, maps.k, maps.p_ptr,
                                           maps.n_spatial)
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(outputs.size, geom.n_inputs))
    return WeightConstraints(matrix, rhs, outputs)


def stack_dense(gradient_rows: Optional[GradientConstraints],
                weight_rows: Optional[WeightConstraints], n_unknowns):
    """Materialise the stacked system ``[A; B] X = [O - b; dW]`` as dense arrays."""
    mats, rhs = [], []
    for part in (weight_rows, gradient_rows):
        if part is not None and part.n_rows:
            m, b = part.dense()
            mats.append(m)
            rhs.append(b)
    if not mats:
        return np.zeros((0, n_unknowns)), np.zeros(0)
    return np.vstack(mats), np.concatenate(rhs)
