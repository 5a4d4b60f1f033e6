"""Benchmark the compiled simulation kernels against the numpy fallback.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly (ignoring the dispatch in
``metasysid.kernels``), fed identical inputs, and checked for agreement
before timing. The workloads mirror the two hot paths: open-loop episodic
simulation as used by the offline dataset generator, and closed-loop
rollout under state feedback.
"""

import argparse
import timeit

import numpy as np

from metasysid import _kernels_py

try:
    from metasysid import _core
except ImportError:
    _core = None


WORKLOADS = [
    # (label, blocks, length, n, m)
    ("scalar, many short blocks", 6000, 12, 1, 1),
    ("scalar, long blocks", 500, 202, 1, 1),
    ("matrix 4x4, medium blocks", 500, 50, 4, 4),
]


def make_open_loop(rng, blocks, length, n, m):
    a = rng.uniform(-0.4, 0.4, (blocks, n, n))
    b = rng.uniform(0.5, 1.0, (blocks, n, m))
    inputs = rng.standard_normal((blocks, length, m))
    noises = 0.1 * rng.standard_normal((blocks, length, n))
    x0 = np.zeros((blocks, n))
    return a, b, inputs, noises, x0


def make_closed_loop(rng, blocks, length, n, m):
    a = rng.uniform(-0.4, 0.4, (blocks, n, n))
    b = rng.uniform(0.5, 1.0, (blocks, n, m))
    gain = -0.2 * np.eye(m, n)
    noises = 0.1 * rng.standard_normal((blocks, length, n))
    x0 = np.zeros((blocks, n))
    return a, b, gain, noises, x0


def best_time(func, repeat):
    return min(timeit.repeat(func, number=1, repeat=repeat))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions per cell (best is reported)")
    args = parser.parse_args()

    if _core is None:
        print("compiled backend not built; showing the numpy fallback only")
        backends = [("python", _kernels_py)]
    else:
        backends = [("python", _kernels_py), ("compiled", _core)]

    rng = np.random.default_rng(0)
    header = f"{'workload':<30} {'kernel':<14}" + "".join(
        f"{name:>12}" for name, _ in backends
    )
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))

    for label, blocks, length, n, m in WORKLOADS:
        open_args = make_open_loop(rng, blocks, length, n, m)
        closed_args = make_closed_loop(rng, blocks, length, n, m)
        for kernel, call_args in (("simulate", open_args), ("closed-loop", closed_args)):
            times = []
            results = []
            for _, mod in backends:
                func = getattr(mod, "simulate_blocks" if kernel == "simulate"
                               else "closed_loop_blocks")
                results.append(func(*call_args))
                times.append(best_time(lambda f=func: f(*call_args), args.repeat))
            if len(results) == 2:  # agreement guard: same trajectories
                first = results[0] if kernel == "simulate" else results[0][0]
                second = results[1] if kernel == "simulate" else results[1][0]
                np.testing.assert_allclose(first, second, rtol=1e-12, atol=1e-12)
            row = f"{label:<30} {kernel:<14}" + "".join(
                f"{t * 1e3:>10.2f}ms" for t in times
            )
            if len(times) == 2:
                row += f"{times[0] / times[1]:>9.1f}x"
            print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
