"""Time the numpy and numba kernel backends on attack-sized problems.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 32]

Each kernel is called once per backend before timing (numba compiles on
first call) and the outputs of the two backends are checked for agreement.
"""

import argparse
import time

import numpy as np

from gradleak import kernels
from gradleak.rconv import build_contribution_maps
from gradleak.tensor import ConvGeometry


def cases(size, rng):
    geom = ConvGeometry(in_channels=3, in_size=size, filters=32, kernel=8, stride=2, padding=3)
    maps = build_contribution_maps(geom)
    xp = rng.standard_normal((3, geom.padded_size, geom.padded_size))
    w = rng.standard_normal(geom.weight_shape)
    d_out = rng.standard_normal(geom.output_shape)
    d_flat = d_out.reshape(geom.filters, -1)
    w_flat = w.reshape(geom.filters, geom.in_channels, -1)
    hh = size * size
    kk = geom.kernel ** 2
    n_out = geom.out_size ** 2
    row_f = np.repeat(np.arange(geom.filters), n_out)
    row_p = np.tile(np.arange(n_out), geom.filters)
    return {
        "conv_forward": (xp, w, geom.stride),
        "conv_weight_grad": (xp, d_out, geom.stride, geom.kernel),
        "conv_input_grad": (d_out, w, geom.stride, geom.padded_size),
        "scatter_input_grad": (d_flat, w_flat, maps.q, maps.p, maps.k, hh),
        "gradient_block": (d_flat, maps.q, maps.p, maps.k, kk, hh),
        "weight_rows": (w_flat, row_f, row_p, maps.q, maps.k, maps.p_ptr, hh),
    }


def best_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=32)
    args = ap.parse_args()

    backends = [kernels.get_backend(b) for b in kernels.available_backends()]
    work = cases(args.size, np.random.default_rng(0))
    print(f"{'kernel':<20}" + "".join(f"{b.name + ' ms':>12}" for b in backends) + f"{'speedup':>10}")
    for name, fargs in work.items():
        outs, ms = [], []
        for b in backends:
            fn = getattr(b, name)
            outs.append(fn(*fargs))  # warm-up / compile
            ms.append(1e3 * best_time(fn, fargs, args.repeat))
        if len(outs) == 2:
            a, c = outs
            if isinstance(a, tuple):
                ok = all(np.allclose(u, v) for u, v in zip(a, c))
            else:
                ok = np.allclose(a, c)
            if not ok:
                raise SystemExit(f"{name}: backends disagree")
        speed = f"{ms[0] / ms[1]:.2f}x" if len(ms) == 2 else "-"
        print(f"{name:<20}" + "".join(f"{t:>12.3f}" for t in ms) + f"{speed:>10}")


if __name__ == "__main__":
    main()
