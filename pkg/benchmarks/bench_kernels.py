"""Benchmark the compiled replication kernels against the reference ones.

Times one replicate of each kernel on representative workloads, checks
that the backends agree, and prints per-call times with the speedup.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--calls 2000]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from twostage.kernels import available_backends
from twostage.randomize import SeededRng


def _coverage_workload(num_households: int, size: int):
    gen = SeededRng(11, num_households).generator
    base = gen.normal(2.0, 0.3, num_households)
    y00 = base[:, None] + gen.normal(0.0, 0.3, (num_households, size))
    y10 = base[:, None] + 0.7 + gen.normal(0.0, 0.3, (num_households, size))
    y11 = base[:, None] + 1.5 + gen.normal(0.0, 0.3, (num_households, size))
    chosen = gen.permutation(num_households)[: num_households // 2]
    member = np.full(num_households, -1, dtype=np.int64)
    member[chosen] = gen.integers(0, size, chosen.shape[0])
    h = np.zeros(num_households, dtype=np.uint8)
    h[chosen] = 1
    return y11, y10, y00, h, member


def _iw_workload(num_households: int):
    gen = SeededRng(12, num_households).generator
    options = np.array([2, 3, 4], dtype=np.int64)
    idx = gen.integers(0, 3, num_households)
    sizes = options[idx]
    base = gen.normal(2.0, 0.3, num_households)
    y00 = base[:, None] + gen.normal(0.0, 0.3, (num_households, 4))
    y10 = base[:, None] + 0.7 + gen.normal(0.0, 0.3, (num_households, 4))
    y11 = base[:, None] + 1.5 + gen.normal(0.0, 0.3, (num_households, 4))
    chosen = gen.permutation(num_households)[: num_households // 2]
    member = np.full(num_households, -1, dtype=np.int64)
    member[chosen] = gen.integers(0, sizes[chosen])
    h = np.zeros(num_households, dtype=np.uint8)
    h[chosen] = 1
    return y11, y10, y00, sizes, h, member, idx, 3


def _time_call(func, args, calls: int) -> float:
    func(*args)  # warm up
    start = time.perf_counter()
    for _ in range(calls):
        func(*args)
    return (time.perf_counter() - start) / calls


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--calls", type=int, default=2000,
                        help="timed calls per case (default 2000)")
    args = parser.parse_args()

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled backend unavailable; timing the reference backend only")

    cases = [
        ("coverage N=100 n=4", "coverage_replicate_stats",
         _coverage_workload(100, 4)),
        ("coverage N=1000 n=4", "coverage_replicate_stats",
         _coverage_workload(1000, 4)),
        ("iw-study N=200", "iw_replicate_stats", _iw_workload(200)),
        ("iw-study N=2000", "iw_replicate_stats", _iw_workload(2000)),
    ]

    name_width = max(len(name) for name, _, _ in cases)
    header = f"{'case':<{name_width}}"
    for backend in backends:
        header += f"  {backend:>12}"
    if len(backends) > 1:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))

    for name, func_name, workload in cases:
        outputs = {b: np.asarray(getattr(m, func_name)(*workload))
                   for b, m in backends.items()}
        values = list(outputs.values())
        worst = max(float(np.nanmax(np.abs(a - values[0])))
                    for a in values[1:]) if len(values) > 1 else 0.0
        if worst > 1e-10:
            raise SystemExit(
                f"{name}: backends disagree by {worst:.2e}")
        line = f"{name:<{name_width}}"
        timings = {}
        for backend, module in backends.items():
            per_call = _time_call(getattr(module, func_name), workload,
                                  args.calls)
            timings[backend] = per_call
            line += f"  {per_call * 1e6:>10.1f}us"
        if len(timings) > 1:
            line += f"  {timings['reference'] / timings['compiled']:>7.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
