"""Index bookkeeping for which inputs, weights and outputs meet in a convolution."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import kernels
from ..tensor import ConvGeometry


@dataclass(frozen=True)
class ContributionMaps:
    """Sliding-window incidence of one convolution geometry.

    The spatial part is stored once as parallel arrays ``q, p, k``: input pixel
    ``q`` (row-major in H x H, padding excluded) reaches output pixel ``p``
    (row-major in oh x oh) through kernel offset ``k`` (row-major in K x K).
    Entries are sorted by ``p`` then ``k``; ``p_ptr`` holds CSR offsets. Window
    cells falling on padding are listed in ``pad_p``/``pad_k``; they always
    contribute zero.

    Channels and filters expand the spatial map: input ``(c, q)`` meets output
    ``(f, p)`` through weight ``(f, c, k)`` for every filter ``f``.
    """

    geom: ConvGeometry
    q: np.ndarray
    p: np.ndarray
    k: np.ndarray
    p_ptr: np.ndarray
    pad_p: np.ndarray
    pad_k: np.ndarray

    @property
    def n_spatial(self):
        return self.geom.in_size ** 2

    @property
    def n_kernel(self):
        return self.geom.kernel ** 2

    @property
    def n_out_spatial(self):
        return self.geom.out_size ** 2

    def input_contributions(self, index):
        """(output index, weight index) pairs for flat input index ``index`` (the v/t lists)."""
        g = self.geom
        c, q = divmod(int(index), self.n_spatial)
        hits = np.flatnonzero(self.q == q)
        pairs = []
        for f in range(g.filters):
            for t in hits:
                pairs.append((f * self.n_out_spatial + int(self.p[t]),
                              (f * g.in_channels + c) * self.n_kernel + int(self.k[t])))
        return pairs

    def weight_contributions(self, index):
        """(output index, input index) pairs for flat weight index ``index`` (the r list)."""
        g = self.geom
        fc, k = divmod(int(index), self.n_kernel)
        f, c = divmod(fc, g.in_channels)
        hits = np.flatnonzero(self.k == k)
        return [(f * self.n_out_spatial + int(self.p[t]), c * self.n_spatial + int(self.q[t]))
                for t in hits]


@lru_cache(maxsize=64)
def build_contribution_maps(geom):
    g = geom
    oh, kk = g.out_size, g.kernel
    oi, oj, ki, kj = np.meshgrid(np.arange(oh), np.arange(oh), np.arange(kk), np.arange(kk),
                                 indexing="ij")
    rows = oi * g.stride + ki - g.padding
    cols = oj * g.stride + kj - g.padding
    p = (oi * oh + oj).ravel()
    k = (ki * kk + kj).ravel()
    rows, cols = rows.ravel(), cols.ravel()
    inside = (rows >= 0) & (rows < g.in_size) & (cols >= 0) & (cols < g.in_size)
    q = rows * g.in_size + cols
    p_in = p[inside]
    p_ptr = np.zeros(oh * oh + 1, dtype=np.int64)
    np.cumsum(np.bincount(p_in, minlength=oh * oh), out=p_ptr[1:])
    arrays = [a.astype(np.int64) for a in (q[inside], p_in, k[inside], p_ptr,
                                           p[~inside], k[~inside])]
    for a in arrays:
        a.setflags(write=False)
    return ContributionMaps(g, *arrays)


def conv_input_gradient(d_out, weights, geom, maps=None):
    """Gradient w.r.t. the conv input: each input sums ``dO * w`` over the outputs it reaches."""
    maps = maps or build_contribution_maps(geom)
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.shape != geom.output_shape:
        raise ValueError(f"output gradient shape {d_out.shape} != {geom.output_shape}")
    w = np.ascontiguousarray(weights, dtype=np.float64).reshape(
        geom.filters, geom.in_channels, maps.n_kernel)
    dx = kernels.scatter_input_grad(d_out.reshape(geom.filters, -1), w,
                                    maps.q, maps.p, maps.k, maps.n_spatial)
    return dx.reshape(geom.input_shape)
