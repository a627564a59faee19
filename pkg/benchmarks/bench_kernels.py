#!/usr/bin/env python3
"""
Compare the numba and pure-numpy kernel paths.

Kernels:
 - accumulate: streamed Monte-Carlo moments over J dropout-corrupted copies
 - enumerate:  exact expectation over all 2^k dropout masks
 - masks:      raw keep/drop mask generation

Usage:
  python benchmarks/bench_kernels.py [--repeat 3] [--J 20000]
"""

import argparse
import time

import numpy as np

from rtm import _kernels


def best_of(fn, repeat):
    fn()  # warm-up / JIT compile
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--J", type=int, default=20_000, help="corrupted copies for the accumulate kernel")
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--enum-k", type=int, default=14)
    args = ap.parse_args()

    if not _kernels.HAS_NUMBA:
        print("numba unavailable (or RTM_DISABLE_NUMBA set); only the numpy path will run")
    backends = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])

    rng = np.random.default_rng(0)
    Z = rng.standard_normal((args.k, args.n))
    Y = np.eye(3)[:, rng.integers(0, 3, args.n)]
    Ze = rng.standard_normal((args.enum_k, 20))
    Ye = np.eye(3)[:, rng.integers(0, 3, 20)]
    copies = np.arange(args.J)

    cases = {
        f"accumulate k={args.k} n={args.n} J={args.J}":
            lambda b: _kernels.accumulate(Z, Y, 0.5, 1, copies, backend=b),
        f"enumerate k={args.enum_k} n=20":
            lambda b: _kernels.enumerate_moments(Ze, Ye, 0.3, backend=b),
        f"masks k={args.k} n={args.n} J={args.J // 10}":
            lambda b: _kernels.keep_masks(1, copies[: args.J // 10], args.k, args.n, 0.5, backend=b),
    }

    print(f"{'kernel':<40} " + " ".join(f"{b:>10}" for b in backends) + "   speedup")
    for name, fn in cases.items():
        t = {b: best_of(lambda: fn(b), args.repeat) for b in backends}
        speed = f"{t['numpy'] / t['numba']:8.1f}x" if "numba" in t else ""
        print(f"{name:<40} " + " ".join(f"{t[b]:9.4f}s" for b in backends) + f"  {speed}")


if __name__ == "__main__":
    main()
