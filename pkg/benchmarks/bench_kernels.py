"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--n 1000000] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from convdiff import kernels
from convdiff._backend import HAVE_NUMBA


def cases(n, rng):
    x = np.cumsum(rng.normal(size=n + 1))
    ends = np.arange(10, n + 1, 10, dtype=np.int64)

    def em(fn, d):
        noise = 1e-3 * rng.normal(size=(d, n))
        an = 1e-4 * rng.normal(size=(d, n))
        B = -2.0 * np.eye(d)
        c = np.ones(d)

        def run():
            values = np.empty((d, n + 1))
            values[:, 0] = 0.0
            area = np.empty((d, n))
            fn(values[:, 0].copy(), B, c, 1e-3, noise, an, values, area, 0)
        return run

    k = 100
    return {
        "em_affine d=1": lambda v: em(getattr(kernels, f"em_affine_{v}"), 1),
        "em_affine d=2": lambda v: em(getattr(kernels, f"em_affine_{v}"), 2),
        "window_sums K=10": lambda v: (lambda f=getattr(kernels, f"window_sums_{v}"): f(x, ends, 10)),
        "increment_sums": lambda v: (lambda f=getattr(kernels, f"increment_sums_{v}"): f(x)),
        f"rv_curve k_max={k}": lambda v: (lambda f=getattr(kernels, f"rv_curve_{v}"): f(x, k)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    variants = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    print(f"n={args.n}  best of {args.repeat}")
    print(f"{'kernel':<22}" + "".join(f"{v:>12}" for v in variants) + "     ratio")
    for name, make in cases(args.n, rng).items():
        times = []
        for v in variants:
            fn = make(v)
            fn()  # compile / warm up
            times.append(min(timeit.repeat(fn, number=1, repeat=args.repeat)))
        ratio = f"{times[1] / times[0]:9.1f}x" if len(times) == 2 else ""
        print(f"{name:<22}" + "".join(f"{t * 1e3:10.1f}ms" for t in times) + ratio)


if __name__ == "__main__":
    main()
