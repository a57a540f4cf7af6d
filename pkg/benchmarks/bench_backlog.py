"""Compare the compiled backlog kernel against the pure-Python fallback.

Usage: python benchmarks/bench_backlog.py [--horizon 792] [--zones 20] [--reps 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from evresil._kernels import KERNEL_BACKEND, simulate_backlog, simulate_backlog_py


def bench(fn, arrivals, service, reps: int) -> float:
    fn(arrivals, service, 200.0, 0.05)  # warm up
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(arrivals, service, 200.0, 0.05)
    return (time.perf_counter() - t0) / reps


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--horizon", type=int, default=792)
    ap.add_argument("--zones", type=int, default=20)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    arrivals = rng.uniform(0, 120, size=(args.horizon, args.zones))
    service = rng.uniform(0, 110, size=(args.horizon, args.zones))

    t_active = bench(simulate_backlog, arrivals, service, args.reps)
    t_py = bench(simulate_backlog_py, arrivals, service, args.reps)

    a = simulate_backlog(arrivals, service, 200.0, 0.05)
    b = simulate_backlog_py(arrivals, service, 200.0, 0.05)
    identical = all(np.array_equal(x, y) for x, y in zip(a, b))

    print(f"backend selected at import: {KERNEL_BACKEND}")
    print(f"grid {args.horizon}x{args.zones}, {args.reps} reps")
    print(f"  active kernel : {t_active * 1e3:8.3f} ms/call")
    print(f"  pure python   : {t_py * 1e3:8.3f} ms/call")
    if t_active > 0:
        print(f"  speedup       : {t_py / t_active:8.2f}x")
    print(f"  outputs bit-identical: {identical}")


if __name__ == "__main__":
    main()
