"""Compare the compiled and NumPy dual-update kernels.

Usage: python benchmarks/bench_kernels.py [--sizes 32 64 128] [--iters 200]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from tvdd import _kernels


def make_case(n, m, seed=0):
    rng = np.random.default_rng(seed)
    v = np.zeros((n, n, 2, m))
    h = rng.standard_normal((n, n, m))
    bound = np.full((n, n), 0.1)
    binv = np.broadcast_to(np.eye(m), (n, n, m, m)).copy()
    return v, h, bound, binv


def bench(n, m, iters, repeat):
    v, h, bound, binv = make_case(n, m)
    tau = 1.0 / 8.0
    rows = {}
    backends = ["numpy"] + (["cython"] if _kernels.HAVE_COMPILED else [])
    for backend in backends:
        def call():
            _kernels.chambolle_window(v.copy(), h, bound, binv, tau, iters, backend=backend)
        rows[backend] = min(timeit.repeat(call, number=1, repeat=repeat))
    if len(rows) == 2:
        a = _kernels.chambolle_window(v.copy(), h, bound, binv, tau, iters, backend="numpy")
        b = _kernels.chambolle_window(v.copy(), h, bound, binv, tau, iters, backend="cython")
        rows["maxdiff"] = float(np.max(np.abs(a - b)))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--channels", type=int, nargs="+", default=[1, 2])
    ap.add_argument("--iters", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'n':>5} {'m':>2} {'numpy [s]':>10} {'cython [s]':>11} {'speedup':>8} {'max |diff|':>11}")
    for n in args.sizes:
        for m in args.channels:
            r = bench(n, m, args.iters, args.repeat)
            cy = r.get("cython", float("nan"))
            print(f"{n:5d} {m:2d} {r['numpy']:10.4f} {cy:11.4f} {r['numpy'] / cy:8.1f} "
                  f"{r.get('maxdiff', float('nan')):11.2e}")


if __name__ == "__main__":
    main()
