"""Hot Viterbi column-update kernel, numba-compiled with a numpy fallback.

Set ``PROTOGUIDE_KERNEL=numpy`` to force the pure-Python/numpy path (used
by the benchmark and as a safety hatch); anything else uses numba when it
is importable.  Both paths execute the identical sequence of float64
operations, so their outputs are bit-identical.

State layout: indices ``0..N-1`` are protocol steps, index ``N`` is the
OFF (off-protocol) state.  Tie-breaks are realized by candidate visit
order with strict improvement: stay, advance, skip (low predecessor
first), regress (low predecessor first), OFF-transition.
"""
from __future__ import annotations

import os

import numpy as np


def _viterbi_step_py(prev, emit, skip_penalty, regress_penalty, off_penalty,
                     out_scores, out_bp):
    n_states = prev.shape[0]
    n = n_states - 1  # steps; index n is OFF
    for s in range(n):
        best = prev[s]          # stay
        bp = s
        if s >= 1:              # advance
            cand = prev[s - 1]
            if cand > best:
                best = cand
                bp = s - 1
        for p in range(s - 1):  # skip from p (= 0..s-2)
            cand = prev[p] - (s - p - 1) * skip_penalty
            if cand > best:
                best = cand
                bp = p
        for p in range(s + 1, n):  # regress from p
            cand = prev[p] - regress_penalty
            if cand > best:
                best = cand
                bp = p
        cand = prev[n] - off_penalty  # leave OFF
        if cand > best:
            best = cand
            bp = n
        out_scores[s] = best + emit[s]
        out_bp[s] = bp
    # OFF column: stay, then enter from any step.
    best = prev[n]
    bp = n
    for p in range(n):
        cand = prev[p] - off_penalty
        if cand > best:
            best = cand
            bp = p
    out_scores[n] = best + emit[n]
    out_bp[n] = bp


_FORCE_NUMPY = os.environ.get("PROTOGUIDE_KERNEL", "").lower() == "numpy"

if not _FORCE_NUMPY:
    try:
        from numba import njit
        _viterbi_step_jit = njit(cache=True)(_viterbi_step_py)
        KERNEL_BACKEND = "numba"
    except ImportError:
        _viterbi_step_jit = None
        KERNEL_BACKEND = "numpy"
else:
    _viterbi_step_jit = None
    KERNEL_BACKEND = "numpy"


def viterbi_step(prev: np.ndarray, emit: np.ndarray, skip_penalty: float,
                 regress_penalty: float, off_penalty: float):
    """One DP column update; returns (scores, backpointers)."""
    out_scores = np.empty_like(prev)
    out_bp = np.empty(prev.shape[0], dtype=np.int64)
    impl = _viterbi_step_jit if _viterbi_step_jit is not None else _viterbi_step_py
    impl(prev, emit, float(skip_penalty), float(regress_penalty),
         float(off_penalty), out_scores, out_bp)
    return out_scores, out_bp
