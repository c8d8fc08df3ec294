"""Compiled vs pure-numpy timings for the pair kernels.

    python3 benchmarks/bench_kernels.py [--sizes 256 512 1024] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from fracplane import _core
from fracplane import _kernels_py as pure


def cases(n, rng):
    p1 = np.sort(rng.uniform(-1, 1, n))[:, None]
    p2 = rng.uniform(-1, 1, (n, 2))
    u, v = rng.normal(size=(2, n))
    ts = rng.uniform(0, 1, n)
    return {
        "kernel_matrix 2d": lambda m: m.kernel_matrix(p2, 1e-3, 0.16, 3.0),
        "pair_form mode 0": lambda m: m.pair_form(u, v, p1, 1e-3, 0.32, 2.0, 0),
        "pair_form mode 2": lambda m: m.pair_form(u, v, p1, 1e-3, 0.32, 2.0, 2, 0.0, 0.2),
        "holder_max 2d": lambda m: m.holder_max(u, p2, ts, 0.25, 1.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 512, 1024])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _core.compiled is None:
        print("compiled extension not built; only the pure backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'n':>6}{'pure [ms]':>12}{'compiled [ms]':>15}{'speedup':>9}")
    for n in args.sizes:
        for name, fn in cases(n, rng).items():
            tp = min(timeit.repeat(lambda: fn(pure), number=1, repeat=args.repeat)) * 1e3
            if _core.compiled is None:
                print(f"{name:<18}{n:>6}{tp:>12.2f}{'-':>15}{'-':>9}")
                continue
            tc = min(timeit.repeat(lambda: fn(_core.compiled), number=1, repeat=args.repeat)) * 1e3
            print(f"{name:<18}{n:>6}{tp:>12.2f}{tc:>15.2f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
