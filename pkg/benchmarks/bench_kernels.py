"""Micro-benchmark of the compiled kernels against the pure-Python
fallback.

Times each kernel on both backends at several input sizes and prints a
speedup table. Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --sizes 1000 100000
"""

import argparse
import time

import numpy as np

from balsim._kernels import _pure
from balsim.workload import CostProfile

try:
    from balsim._kernels import _compiled
except ImportError:
    _compiled = None


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def make_cases(size, rng):
    profile = CostProfile()
    lengths = np.ascontiguousarray(rng.integers(1, 8192, size=size),
                                   dtype=np.int64)
    starts = np.ascontiguousarray(lengths // 4)
    ends = np.ascontiguousarray(lengths - lengths // 4)
    kv = np.ascontiguousarray(np.maximum(lengths, 1))
    curve_q = np.ascontiguousarray([q for q, _ in profile.tflops_curve],
                                   dtype=np.int64)
    curve_v = np.ascontiguousarray([v for _, v in profile.tflops_curve],
                                   dtype=np.float64)
    desc = np.ascontiguousarray(np.sort(lengths)[::-1])
    l_max = int(lengths.sum() // 8 + lengths.max())
    return {
        "sum_pair_counts": lambda impl: impl.sum_pair_counts(lengths),
        "range_pair_sum": lambda impl: impl.range_pair_sum(starts, ends),
        "kernel_latency_sum": lambda impl: impl.kernel_latency_sum(
            lengths, kv, profile.tile_size, curve_q, curve_v,
            profile.op_scale),
        "heuristic_fill": lambda impl: impl.heuristic_fill(
            desc, 8, l_max, profile.attn_coeff, profile.linear_coeff),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[1_000, 10_000, 100_000],
                        help="number of documents per case")
    parser.add_argument("--repeats", type=int, default=5,
                        help="take the best of this many timings")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _compiled is None:
        print("compiled backend unavailable; timing the fallback only")
    rng = np.random.default_rng(args.seed)

    header = (f"{'kernel':<20} {'docs':>8} {'pure':>12} "
              f"{'compiled':>12} {'speedup':>8}")
    print(header)
    print("-" * len(header))
    for size in args.sizes:
        cases = make_cases(size, rng)
        for name, call in cases.items():
            t_pure = best_of(lambda: call(_pure), args.repeats)
            if _compiled is None:
                print(f"{name:<20} {size:>8} {t_pure * 1e3:>10.3f}ms "
                      f"{'-':>12} {'-':>8}")
                continue
            got_pure, got_comp = call(_pure), call(_compiled)
            if isinstance(got_pure, np.ndarray):
                assert np.array_equal(got_pure, got_comp)
            else:
                assert got_pure == got_comp, (name, got_pure, got_comp)
            t_comp = best_of(lambda: call(_compiled), args.repeats)
            print(f"{name:<20} {size:>8} {t_pure * 1e3:>10.3f}ms "
                  f"{t_comp * 1e3:>10.3f}ms {t_pure / t_comp:>7.1f}x")


if __name__ == "__main__":
    main()
