"""Time the numba and numpy kernel backends on the hot training loops.

Usage::

    python benchmarks/bench_kernels.py [--n 8192] [--depth 9] [--width 7] [--repeat 5]
"""

import argparse
import time

import numpy as np

from spdnn import kernels
from spdnn.network import Architecture, init_params


def best_of(fn, repeat):
    fn()  # warm up (and trigger compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=8192)
    ap.add_argument("--d", type=int, default=1)
    ap.add_argument("--depth", type=int, default=9)
    ap.add_argument("--width", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    arch = Architecture.uniform(args.d, args.depth, args.width, B=10.0, F=2.0)
    rng = np.random.default_rng(0)
    theta = init_params(arch, rng)
    X = rng.random((args.n, args.d))
    y = rng.standard_normal(args.n)
    w = arch.widths_array
    z = rng.normal(0, 0.1, arch.n_params)

    backends = [name for name in ("numpy", "numba") if name == "numpy" or kernels.HAVE_NUMBA]
    print(f"n={args.n}  widths={arch.widths}  P={arch.n_params}")
    print(f"{'operation':<12}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    ops = {
        "predict": lambda k: (lambda: k.predict(theta, w, X, 2.0, True)),
        "risk": lambda k: (lambda: k.risk(theta, w, X, y, kernels.LOSS_HUBER, 10.0, 2.0, True)),
        "risk_grad": lambda k: (lambda: k.risk_grad(theta, w, X, y, kernels.LOSS_HUBER, 10.0, 2.0, True)),
        "prox": lambda k: (lambda: k.prox(kernels.PEN_SCAD, z, 0.01, 1e-3, 1e-2, 3.7)),
    }
    for name, make in ops.items():
        t = [best_of(make(kernels.get_backend(b)), args.repeat) for b in backends]
        speed = f"{t[0] / t[-1]:>9.1f}x" if len(t) > 1 else ""
        print(f"{name:<12}" + "".join(f"{v * 1e3:>12.3f}ms" for v in t) + speed)


if __name__ == "__main__":
    main()
