"""Independent reference implementations used as test oracles.

Plain Python loops and the ``math`` module only: nothing here shares code
with the package under test.
"""

import math

import numpy as np

from gradleak.model import parse_architecture


def loop_conv2d(x, w, bias, stride, padding):
    n, h, _ = x.shape
    f, _, k, _ = w.shape
    hp = h + 2 * padding
    out = (hp - k) // stride + 1
    xp = [[[0.0] * hp for _ in range(hp)] for _ in range(n)]
    for c in range(n):
        for i in range(h):
            for j in range(h):
                xp[c][i + padding][j + padding] = float(x[c, i, j])
    o = np.zeros((f, out, out))
    for d in range(f):
        for i in range(out):
            for j in range(out):
                s = 0.0 if bias is None else float(bias[d])
                for c in range(n):
                    for a in range(k):
                        for b in range(k):
                            s += float(w[d, c, a, b]) * xp[c][i * stride + a][j * stride + b]
                o[d, i, j] = s
    return o


def loop_dense(x, w, b):
    c, n = w.shape
    return np.array([sum(float(w[m, i]) * float(x[i]) for i in range(n)) + float(b[m])
                     for m in range(c)])


def scalar_activation(o, kind, alpha=None):
    if kind == "sigmoid":
        return 1.0 / (1.0 + math.exp(-o))
    if kind == "tanh":
        return math.tanh(o)
    if kind == "arctan":
        return math.atan(o)
    if kind == "softplus":
        return math.log1p(math.exp(o)) if o < 30 else o + math.log1p(math.exp(-o))
    if kind == "relu":
        return max(o, 0.0)
    if kind == "leaky_relu":
        return o if o > 0 else 0.01 * o
    if kind == "prelu":
        return o if o > 0 else alpha * o
    if kind == "elu":
        return o if o > 0 else alpha * (math.exp(o) - 1.0)
    raise ValueError(kind)


def forward_oracle(arch, params, x, start=0):
    """Logits from loop convolutions, loop dense product and scalar activations.

    ``x`` is fed in as the input of layer ``start``.
    """
    cur = np.asarray(x, dtype=np.float64)
    for i in range(start, len(arch.layers)):
        layer = arch.layers[i]
        name = type(layer).__name__
        if name == "Conv":
            g = layer.geom
            cur = loop_conv2d(cur, params[i].weights, params[i].bias, g.stride, g.padding)
        elif name == "Activation":
            flat = [scalar_activation(float(v), layer.kind, layer.alpha) for v in cur.ravel()]
            cur = np.array(flat).reshape(cur.shape)
        elif name == "Flatten":
            cur = cur.ravel()
        else:
            cur = loop_dense(cur, params[i].weights, params[i].bias)
    return cur


def ce_loss(logits, label):
    m = max(logits)
    return -(logits[label] - m - math.log(sum(math.exp(v - m) for v in logits)))


def central_diff(f, x, h=1e-6):
    """Central differences of scalar ``f`` w.r.t. every entry of array ``x`` (modified in place)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        out[i] = (up - down) / (2 * h)
    return g


def enumerate_windows(in_size, kernel, stride, padding):
    """Every (input q, output p, kernel k) incidence found by sliding the window."""
    out = (in_size + 2 * padding - kernel) // stride + 1
    triples = set()
    for i in range(out):
        for j in range(out):
            for a in range(kernel):
                for b in range(kernel):
                    r, c = i * stride + a - padding, j * stride + b - padding
                    if 0 <= r < in_size and 0 <= c < in_size:
                        triples.add((r * in_size + c, i * out + j, a * kernel + b))
    return triples


def make_arch(channels, size, convs, units=10, kind="relu", alpha=None, bias=False):
    """Arch from a list of (filters, kernel, stride, padding); activations all ``kind``."""
    layers = []
    for f, k, s, p in convs:
        layers.append({"type": "conv", "filters": f, "kernel": k, "stride": s, "padding": p,
                       "bias": bias})
        layers.append({"type": "activation", "kind": kind, "alpha": alpha})
    layers += [{"type": "flatten"}, {"type": "dense", "units": units}]
    return parse_architecture({"input": {"channels": channels, "height": size, "width": size},
                               "layers": layers})


def default_alpha(kind):
    return {"prelu": 0.2, "elu": 1.0}.get(kind)


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / (1.0 + np.abs(a)))) if a.size else 0.0


KINDS = ("sigmoid", "tanh", "arctan", "softplus", "relu", "leaky_relu", "prelu", "elu")


def random_small_arch(rng, max_convs=2, max_channels=3, max_size=8, kinds=KINDS):
    """A random valid conv stack + dense head, small enough for loop oracles."""
    c = int(rng.integers(1, max_channels + 1))
    size = int(rng.integers(3, max_size + 1))
    convs = []
    cur = size
    for _ in range(int(rng.integers(1, max_convs + 1))):
        options = [(k, s, p) for k in range(1, 5) for s in (1, 2) for p in (0, 1)
                   if cur + 2 * p - k >= 0 and (cur + 2 * p - k) % s == 0]
        k, s, p = options[int(rng.integers(len(options)))]
        convs.append((int(rng.integers(1, 5)), k, s, p))
        cur = (cur + 2 * p - k) // s + 1
    kind = kinds[int(rng.integers(len(kinds)))]
    return make_arch(c, size, convs, units=int(rng.integers(2, 6)), kind=kind,
                     alpha=default_alpha(kind), bias=bool(rng.integers(2)))
