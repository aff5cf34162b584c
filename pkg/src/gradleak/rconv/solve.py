"""Rank-revealing least squares for the stacked constraint system of one layer."""

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.sparse.linalg import LinearOperator, lsqr

from ..errors import RankDeficient
from .constraints import stack_dense

DEFAULT_RANK_EPS = 1e-10
LSQR_TOL = 1e-8
LSQR_MAX_ITER = 500


def default_rank_eps():
    value = os.environ.get("GRADLEAK_RANK_EPS")
    return float(value) if value else DEFAULT_RANK_EPS


@dataclass
class LayerSolution:
    x: np.ndarray
    rank: int
    residual: float


def _family_scales(gradient_rows, weight_rows):
    """Largest entry of each row family (0 when absent or empty)."""
    g = w = 0.0
    if gradient_rows is not None and gradient_rows.block.size:
        g = float(np.abs(gradient_rows.block).max())
    if weight_rows is not None and weight_rows.matrix.nnz:
        w = float(np.abs(weight_rows.matrix.data).max())
    return g, w


def _numerical_rank(r_factor, tol):
    diag = np.abs(np.diag(r_factor))
    return int(np.count_nonzero(diag > tol))


class _BlockFactor:
    """Pivoted QR of the shared per-channel gradient block."""

    def __init__(self, gradient_rows, tol):
        self.rows = gradient_rows
        self.q, self.r, self.piv = la.qr(gradient_rows.block, mode="economic", pivoting=True)
        self.block_rank = _numerical_rank(self.r, tol)
        self.full = self.block_rank == gradient_rows.n_spatial

    def apply_inverse(self, u):
        # u is (H*H, N); solves (R P^T) x = u channel-wise
        z = la.solve_triangular(self.r, u)
        x = np.empty_like(z)
        x[self.piv] = z
        return x

    def apply_inverse_transpose(self, w):
        return la.solve_triangular(self.r, w[self.piv], trans="T")

    def solve(self):
        return self.apply_inverse(self.q.T @ self.rows.rhs).T.ravel()


def _refine_with_weight_rows(factor, weight_rows, x0):
    """Exact stacked least squares from the gradient-only solution.

    With ``T = I (x) R P^T`` the gradient part of the objective equals
    ``||T dx||^2`` up to a constant, so the stacked problem becomes the damped
    problem ``min ||u||^2 + ||A T^-1 u - e||^2`` with ``u = T dx`` and
    ``e = a - A x0``.
    """
    n_ch = factor.rows.n_channels
    hh = factor.rows.n_spatial
    a = weight_rows.matrix
    e = weight_rows.rhs - a @ x0
    if not np.any(e):
        return x0

    def t_inv(u):
        return factor.apply_inverse(u.reshape(n_ch, hh).T).T.ravel()

    def matvec(u):
        return a @ t_inv(u)

    def rmatvec(y):
        w = (a.T @ y).reshape(n_ch, hh).T
        return factor.apply_inverse_transpose(w).T.ravel()

    op = LinearOperator((a.shape[0], a.shape[1]), matvec=matvec, rmatvec=rmatvec,
                        dtype=np.float64)
    # e is already at rounding level; relative accuracy on the correction is ample
    u = lsqr(op, e, damp=1.0, atol=LSQR_TOL, btol=LSQR_TOL, conlim=1e16,
             iter_lim=LSQR_MAX_ITER)[0]
    return x0 + t_inv(u)


def _residual(x, gradient_rows, weight_rows):
    total = 0.0
    if gradient_rows is not None:
        total += float(np.sum((gradient_rows.matvec(x) - gradient_rows.rhs_vector()) ** 2))
    if weight_rows is not None and weight_rows.n_rows:
        total += float(np.sum((weight_rows.matvec(x) - weight_rows.rhs) ** 2))
    return float(np.sqrt(total))


def _dense_factor(gradient_rows, weight_rows, n_unknowns, eps):
    # Each family is scaled to unit max entry first. The gradient rows carry
    # dO and can be orders of magnitude smaller than the weights, which would
    # otherwise push their singular values under a shared threshold.
    g_scale, w_scale = _family_scales(gradient_rows, weight_rows)
    m, b = stack_dense(gradient_rows, weight_rows, n_unknowns)
    if m.shape[0] == 0:
        return 0, None
    n_weight = weight_rows.n_rows if weight_rows is not None else 0
    scale = np.ones(m.shape[0])
    if w_scale > 0:
        scale[:n_weight] = 1.0 / w_scale
    if g_scale > 0:
        scale[n_weight:] = 1.0 / g_scale
    m *= scale[:, None]
    b = b * scale
    q, r, piv = la.qr(m, mode="economic", pivoting=True)
    return _numerical_rank(r, eps), (q, r, piv, b)


def _check_inputs(gradient_rows, weight_rows, n_unknowns):
    n_rows = 0
    for part in (gradient_rows, weight_rows):
        if part is not None:
            n_rows += part.n_rows
    if n_rows == 0:
        raise ValueError("the stacked system has no rows")
    if gradient_rows is not None and gradient_rows.n_unknowns != n_unknowns:
        raise ValueError(f"gradient rows span {gradient_rows.n_unknowns} unknowns, not {n_unknowns}")
    if weight_rows is not None and weight_rows.matrix.shape[1] != n_unknowns:
        raise ValueError(f"weight rows span {weight_rows.matrix.shape[1]} unknowns, not {n_unknowns}")


def stacked_rank(gradient_rows, weight_rows, n_unknowns, rank_eps=None):
    """Numerical rank of ``[A; B]``.

    Each row family is scaled to unit max entry and singular directions below
    ``rank_eps`` count as missing.
    """
    _check_inputs(gradient_rows, weight_rows, n_unknowns)
    eps = default_rank_eps() if rank_eps is None else rank_eps
    if gradient_rows is not None:
        factor = _BlockFactor(gradient_rows, eps * _family_scales(gradient_rows, None)[0])
        if factor.full:
            return n_unknowns
    return _dense_factor(gradient_rows, weight_rows, n_unknowns, eps)[0]


def solve_layer_input(gradient_rows, weight_rows, n_unknowns, rank_eps=None):
    """Least-squares solution of the stacked weight/gradient system.

    Raises :class:`RankDeficient` instead of returning a solution when the
    numerical rank falls short of ``n_unknowns``. When the gradient rows alone
    have full column rank the Kronecker structure is used and the weight rows
    enter through a damped LSQR correction; otherwise the dense stacked matrix
    goes through column-pivoted QR.
    """
    _check_inputs(gradient_rows, weight_rows, n_unknowns)
    eps = default_rank_eps() if rank_eps is None else rank_eps
    if weight_rows is not None and weight_rows.n_rows == 0:
        weight_rows = None

    if gradient_rows is not None:
        factor = _BlockFactor(gradient_rows, eps * _family_scales(gradient_rows, None)[0])
        if factor.full:
            x = factor.solve()
            if weight_rows is not None:
                x = _refine_with_weight_rows(factor, weight_rows, x)
            return LayerSolution(x, n_unknowns, _residual(x, gradient_rows, weight_rows))

    rank, fac = _dense_factor(gradient_rows, weight_rows, n_unknowns, eps)
    if rank < n_unknowns:
        raise RankDeficient(rank, n_unknowns)
    q, r, piv, b = fac
    z = la.solve_triangular(r[:n_unknowns, :n_unknowns], (q.T @ b)[:n_unknowns])
    x = np.empty(n_unknowns)
    x[piv] = z
    return LayerSolution(x, rank, _residual(x, gradient_rows, weight_rows))
