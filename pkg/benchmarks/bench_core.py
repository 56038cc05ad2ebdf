"""Compare the compiled kernels with their pure-Python fallbacks.

Usage: python3 benchmarks/bench_core.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mazing import _core_py

try:
    from mazing import _core
except ImportError:  # extension not built
    _core = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    Z = np.ascontiguousarray(rng.normal(size=(2000, 30)))
    U = np.full(2000, 0.01)
    Q = np.ascontiguousarray(Z[:400] @ Z[:400].T / 30 + 0.1 * np.eye(400))
    y = rng.normal(size=100_000)
    return [
        ("linear_dual_cd n=2000 d=30", lambda m: m.linear_dual_cd(Z, U, 1e-3, 1000, 1)[2:4]),
        ("kernel_dual_cd n=400", lambda m: m.kernel_dual_cd(Q, U[:400] * 100, 1e-3, 1000)[1:3]),
        ("count_inversions n=1e5", lambda m: m.count_inversions(y)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<30} {'compiled s':>11} {'python s':>10} {'speed-up':>9}")
    for name, fn in cases(rng):
        tp, out_p = best_of(lambda: fn(_core_py), args.repeat)
        if _core is None:
            print(f"{name:<30} {'n/a':>11} {tp:>10.4f} {'n/a':>9}")
            continue
        tc, out_c = best_of(lambda: fn(_core), args.repeat)
        same = "" if str(out_c) == str(out_p) else "  (outputs differ!)"
        print(f"{name:<30} {tc:>11.4f} {tp:>10.4f} {tp / tc:>8.1f}x{same}")


if __name__ == "__main__":
    main()
