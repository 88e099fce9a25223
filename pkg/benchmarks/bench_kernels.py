#!/usr/bin/env python3
"""Benchmark the jitted kernels against the pure-numpy fallback.

Runs each hot kernel on identical pre-drawn uniforms with both backends
and prints throughput. The outputs are asserted bit-identical first, so
the comparison is apples to apples.

    python3 benchmarks/bench_kernels.py --photons 5000000 --repeat 5
"""

import argparse
import time

import numpy as np

from qpqsim import _kernels
from qpqsim.qubits import born_outcome0_tables


def _time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--photons", type=int, default=5_000_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if not _kernels._HAVE_NUMBA:
        print("numba backend unavailable (QPQSIM_BACKEND=numpy or numba missing);")
        print("benchmarking the numpy fallback only.")

    rng = np.random.default_rng(0)
    n = args.photons
    p0, p0_flip = born_outcome0_tables(0.5)
    transmission_args = (
        rng.random(n),
        (rng.random(n) >= 0.5).astype(np.uint8),
        rng.random((n, 3)),
        p0,
        p0_flip,
        0.3,
        0.01,
    )
    usd_args = (
        rng.random(n),
        (rng.random(n) >= 0.5).astype(np.uint8),
        np.array([1e-16, 1e-16]),
        np.array([0.04, 0.04]),
    )
    conclusive_args = (rng.random((n, 3)), np.array([[0.85, 0.85], [0.15, 0.15]]), True)

    kernels = [
        ("simulate_transmission", _kernels._simulate_transmission_np,
         getattr(_kernels, "_simulate_transmission_nb", None), transmission_args),
        ("usd_trials", _kernels._usd_trials_np,
         getattr(_kernels, "_usd_trials_nb", None), usd_args),
        ("conclusiveness_trials", _kernels._conclusiveness_trials_np,
         getattr(_kernels, "_conclusiveness_trials_nb", None), conclusive_args),
    ]

    print(f"{n:,} elements per call, best of {args.repeat}")
    header = f"{'kernel':<24}{'numpy':>12}{'numba':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, np_fn, nb_fn, call_args in kernels:
        t_np = _time(np_fn, call_args, args.repeat)
        row = f"{name:<24}{t_np * 1e3:>10.1f}ms"
        if nb_fn is not None:
            nb_fn(*call_args)  # compile outside the timed region
            out_np = np_fn(*call_args)
            out_nb = nb_fn(*call_args)
            pairs = zip(out_np, out_nb) if isinstance(out_np, tuple) else [(out_np, out_nb)]
            assert all(np.array_equal(a, b) for a, b in pairs), f"{name}: backends diverge"
            t_nb = _time(nb_fn, call_args, args.repeat)
            row += f"{t_nb * 1e3:>10.1f}ms{t_np / t_nb:>9.2f}x"
        else:
            row += f"{'n/a':>12}{'n/a':>10}"
        print(row)


if __name__ == "__main__":
    main()
