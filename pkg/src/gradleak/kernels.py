"""Inner loops for convolution and constraint assembly.

Every kernel exists twice: a vectorised numpy version and a numba ``@njit``
loop version. The numba path is used when numba imports and the environment
variable ``GRADLEAK_DISABLE_NUMBA`` is unset (or falsy); otherwise the numpy
path is bound. Both paths are exercised by the test-suite and compared by
``benchmarks/bench_kernels.py``.

Conventions: ``xp`` is a zero-padded input of shape (N, Hp, Hp); convolution
outputs are (F, oh, oh); flattened spatial indices are row-major. The
``q/p/k`` triples come from :class:`gradleak.rconv.ContributionMaps` and list,
for every non-padded input pixel ``q`` touched by output pixel ``p`` through
kernel offset ``k``, one entry; they are sorted by ``p`` and ``p_ptr`` gives
the CSR offsets into them.
"""

import os
from types import SimpleNamespace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_FALSY = {"", "0", "false", "no", "off"}


def numba_disabled():
    return os.environ.get("GRADLEAK_DISABLE_NUMBA", "").strip().lower() not in _FALSY


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------

def _windows(xp, kernel, stride):
    win = sliding_window_view(xp, (kernel, kernel), axis=(1, 2))
    return win[:, ::stride, ::stride]


def np_conv_forward(xp, w, stride):
    win = _windows(xp, w.shape[2], stride)
    return np.tensordot(w, win, axes=([1, 2, 3], [0, 3, 4]))


def np_conv_weight_grad(xp, d_out, stride, kernel):
    win = _windows(xp, kernel, stride)
    return np.tensordot(d_out, win, axes=([1, 2], [1, 2]))


def np_conv_input_grad(d_out, w, stride, padded_size):
    n_ch = w.shape[1]
    kernel = w.shape[2]
    oh = d_out.shape[1]
    span = stride * (oh - 1) + 1
    dxp = np.zeros((n_ch, padded_size, padded_size))
    for a in range(kernel):
        for b in range(kernel):
            dxp[:, a:a + span:stride, b:b + span:stride] += np.tensordot(
                w[:, :, a, b], d_out, axes=([0], [0]))
    return dxp


def np_scatter_input_grad(d_out, w, q, p, k, n_spatial):
    # d_out (F, P), w (F, N, KK) -> (N, n_spatial)
    contrib = np.einsum("ft,fnt->nt", d_out[:, p], w[:, :, k])
    dx = np.zeros((w.shape[1], n_spatial))
    np.add.at(dx, (slice(None), q), contrib)
    return dx


def np_gradient_block(d_out, q, p, k, n_kernel, n_spatial):
    # d_out (F, P) -> (F * KK, n_spatial); (k, q) determines p, so no collisions
    n_filters = d_out.shape[0]
    block = np.zeros((n_filters * n_kernel, n_spatial))
    rows = np.arange(n_filters)[:, None] * n_kernel + k[None, :]
    block[rows, np.broadcast_to(q, rows.shape)] = d_out[:, p]
    return block


def np_weight_rows(w, row_f, row_p, q, k, p_ptr, n_spatial):
    # w (F, N, KK); returns COO (rows, cols, vals)
    n_ch = w.shape[1]
    starts = p_ptr[row_p]
    lens = p_ptr[row_p + 1] - starts
    row_of = np.repeat(np.arange(row_f.size), lens)
    offs = np.arange(row_of.size) - np.repeat(np.cumsum(lens) - lens, lens)
    t = starts[row_of] + offs
    chans = np.arange(n_ch)
    rows = np.repeat(row_of, n_ch)
    cols = (chans[None, :] * n_spatial + q[t][:, None]).ravel()
    vals = w[row_f[row_of][:, None], chans[None, :], k[t][:, None]].ravel()
    return rows, cols, vals


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAVE_NUMBA:
    njit = numba.njit(cache=True, nogil=True)

    @njit
    def nb_conv_forward(xp, w, stride):
        n_f, n_c, kernel, _ = w.shape
        oh = (xp.shape[1] - kernel) // stride + 1
        out = np.zeros((n_f, oh, oh))
        for f in range(n_f):
            for i in range(oh):
                for j in range(oh):
                    acc = 0.0
                    for c in range(n_c):
                        for a in range(kernel):
                            row = i * stride + a
                            for b in range(kernel):
                                acc += w[f, c, a, b] * xp[c, row, j * stride + b]
                    out[f, i, j] = acc
        return out

    @njit
    def nb_conv_weight_grad(xp, d_out, stride, kernel):
        n_f, oh, _ = d_out.shape
        n_c = xp.shape[0]
        dw = np.zeros((n_f, n_c, kernel, kernel))
        for f in range(n_f):
            for c in range(n_c):
                for a in range(kernel):
                    for b in range(kernel):
                        acc = 0.0
                        for i in range(oh):
                            for j in range(oh):
                                acc += d_out[f, i, j] * xp[c, i * stride + a, j * stride + b]
                        dw[f, c, a, b] = acc
        return dw

    @njit
    def nb_conv_input_grad(d_out, w, stride, padded_size):
        n_f, n_c, kernel, _ = w.shape
        oh = d_out.shape[1]
        dxp = np.zeros((n_c, padded_size, padded_size))
        for f in range(n_f):
            for i in range(oh):
                for j in range(oh):
                    g = d_out[f, i, j]
                    if g == 0.0:
                        continue
                    for c in range(n_c):
                        for a in range(kernel):
                            for b in range(kernel):
                                dxp[c, i * stride + a, j * stride + b] += g * w[f, c, a, b]
        return dxp

    @njit
    def nb_scatter_input_grad(d_out, w, q, p, k, n_spatial):
        n_f, n_c, _ = w.shape
        dx = np.zeros((n_c, n_spatial))
        for t in range(q.size):
            qt = q[t]
            pt = p[t]
            kt = k[t]
            for f in range(n_f):
                g = d_out[f, pt]
                if g == 0.0:
                    continue
                for c in range(n_c):
                    dx[c, qt] += g * w[f, c, kt]
        return dx

    @njit
    def nb_gradient_block(d_out, q, p, k, n_kernel, n_spatial):
        n_f = d_out.shape[0]
        block = np.zeros((n_f * n_kernel, n_spatial))
        for t in range(q.size):
            for f in range(n_f):
                block[f * n_kernel + k[t], q[t]] = d_out[f, p[t]]
        return block

    @njit
    def nb_weight_rows(w, row_f, row_p, q, k, p_ptr, n_spatial):
        n_c = w.shape[1]
        total = 0
        for r in range(row_f.size):
            total += (p_ptr[row_p[r] + 1] - p_ptr[row_p[r]]) * n_c
        rows = np.empty(total, dtype=np.int64)
        cols = np.empty(total, dtype=np.int64)
        vals = np.empty(total)
        pos = 0
        for r in range(row_f.size):
            f = row_f[r]
            for t in range(p_ptr[row_p[r]], p_ptr[row_p[r] + 1]):
                for c in range(n_c):
                    rows[pos] = r
                    cols[pos] = c * n_spatial + q[t]
                    vals[pos] = w[f, c, k[t]]
                    pos += 1
        return rows, cols, vals


_NAMES = ("conv_forward", "conv_weight_grad", "conv_input_grad",
          "scatter_input_grad", "gradient_block", "weight_rows")


def get_backend(name):
    """Return a namespace of kernels for ``"numpy"`` or ``"numba"``."""
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not installed")
        prefix = "nb_"
    elif name == "numpy":
        prefix = "np_"
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    table = globals()
    return SimpleNamespace(name=name, **{n: table[prefix + n] for n in _NAMES})


def available_backends():
    return ("numpy", "numba") if HAVE_NUMBA else ("numpy",)


BACKEND = "numba" if HAVE_NUMBA and not numba_disabled() else "numpy"
_active = get_backend(BACKEND)

conv_forward = _active.conv_forward
conv_weight_grad = _active.conv_weight_grad
conv_input_grad = _active.conv_input_grad
scatter_input_grad = _active.scatter_input_grad
gradient_block = _active.gradient_block
weight_rows = _active.weight_rows
