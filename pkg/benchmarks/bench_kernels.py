#!/usr/bin/env python
"""Time the numba kernels against their pure-numpy fallbacks.

Usage:
    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --repeat 10 --output bench.json
"""

import argparse
import json
import platform
import time

import numpy as np

from lpl import _accel, kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    for n, d in ((1000, 8), (2000, 20), (5000, 50)):
        a = rng.normal(size=(n, d))
        yield (f"jacobi n={n} d={d}", lambda a=a: kernels.jacobi_singular_values_nb(a),
               lambda a=a: kernels.jacobi_singular_values_np(a))
    for k, n, d in ((1000, 1024, 2), (1000, 1024, 20), (1000, 4096, 100)):
        c, p = rng.normal(size=(k, d)), rng.normal(size=(n, d))
        yield (f"mean_sq_distance k={k} n={n} d={d}", lambda c=c, p=p: kernels.mean_sq_distance_nb(c, p),
               lambda c=c, p=p: kernels.mean_sq_distance_np(c, p))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--output", default=None, help="write results as JSON")
    args = parser.parse_args()

    if not _accel.NUMBA_AVAILABLE:
        print("numba is disabled or missing; the *_nb kernels run as plain Python")
    _accel.configure_threads()
    results = []
    print(f"{'kernel':<40}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, nb, npy in cases():
        nb()  # compile outside the timed region
        t_nb, t_np = best_of(nb, args.repeat), best_of(npy, args.repeat)
        results.append({"kernel": name, "numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb})
        print(f"{name:<40}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>9.1f}x")

    if args.output:
        meta = {"backend": _accel.backend(), "python": platform.python_version(),
                "numpy": np.__version__, "repeat": args.repeat}
        with open(args.output, "w") as f:
            json.dump({"meta": meta, "results": results}, f, indent=2)


if __name__ == "__main__":
    main()
