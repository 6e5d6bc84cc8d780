"""Benchmark the numba kernel against the pure-Python/numpy fallback.

Usage: python benchmarks/bench_kernels.py [n_steps] [n_obs]
"""
import sys
import time

import numpy as np

from protoguide.alignment.kernels import (
    KERNEL_BACKEND,
    _viterbi_step_py,
    viterbi_step,
)


def run(n_steps=100, n_obs=500, repeats=5):
    rng = np.random.default_rng(0)
    prev = rng.normal(size=n_steps + 1)
    emits = rng.normal(size=(n_obs, n_steps + 1))
    sp, rp, op = 2.3, 4.6, 3.9

    def column_sweep(use_fallback):
        p = prev.copy()
        for t in range(n_obs):
            if use_fallback:
                scores = np.empty_like(p)
                bp = np.empty(n_steps + 1, dtype=np.int64)
                _viterbi_step_py(p, emits[t], sp, rp, op, scores, bp)
            else:
                scores, bp = viterbi_step(p, emits[t], sp, rp, op)
            p = scores
        return p

    # warm-up (JIT compile)
    column_sweep(False)
    column_sweep(True)

    results = {}
    for name, fallback in ((KERNEL_BACKEND, False), ("python", True)):
        best = min(_timed(column_sweep, fallback) for _ in range(repeats))
        results[name] = best * 1e-6

    a = column_sweep(False)
    b = column_sweep(True)
    assert np.array_equal(a, b), "kernel paths diverged"

    print(f"{n_steps} steps x {n_obs} observations, best of {repeats}:")
    for name, ms in results.items():
        print(f"  {name:8s} {ms:10.2f} ms")
    if "numba" in results and "python" in results:
        print(f"  speedup  {results['python'] / results['numba']:10.1f}x")


def _timed(fn, arg):
    t0 = time.perf_counter_ns()
    fn(arg)
    return time.perf_counter_ns() - t0


if __name__ == "__main__":
    n_steps = int(sys.argv[1]) if len(sys.argv) > 1 else 100
    n_obs = int(sys.argv[2]) if len(sys.argv) > 2 else 500
    run(n_steps, n_obs)
