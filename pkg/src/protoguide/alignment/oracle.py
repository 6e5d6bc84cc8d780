"""Exhaustive reference aligner for testing the DP engine.

Scores every possible state path with the same transition and emission
rules (re-derived here, deliberately sharing no code with the engine) and
returns the best path under the engine's tie-break order.  Summation
order per path matches the engine's column updates, so scores agree
bitwise.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import InstanceTooLarge
from ..gateway import Observation
from ..protocol import Protocol, UNKNOWN_LABEL
from .engine import OFF, AlignmentConfig

MAX_PATHS = 10_000_000

# Transition preference: stay > advance > skip > regress > OFF-related.
_STAY, _ADVANCE, _SKIP, _REGRESS, _OFFREL = 0, 1, 2, 3, 4


def _transition(p: int, s: int, n: int, c: AlignmentConfig) -> tuple[float, int]:
    """(cost, kind rank) of moving from state p to state s; index n is OFF."""
    if p == n and s == n:
        return 0.0, _STAY
    if p == n or s == n:
        return c.off_penalty, _OFFREL
    if p == s:
        return 0.0, _STAY
    if s == p + 1:
        return 0.0, _ADVANCE
    if s > p + 1:
        return (s - p - 1) * c.skip_penalty, _SKIP
    return c.regress_penalty, _REGRESS


def _emission_matrix(protocol: Protocol, obs: list[Observation],
                     c: AlignmentConfig) -> np.ndarray:
    n = len(protocol.steps)
    e = np.empty((len(obs), n + 1), dtype=np.float64)
    for t, o in enumerate(obs):
        for i, step in enumerate(protocol.steps):
            if o.action_label != UNKNOWN_LABEL and o.action_label == step.action_label:
                e[t, i] = math.log(max(o.confidence, c.confidence_floor))
            else:
                e[t, i] = math.log(c.mismatch_floor)
        e[t, n] = math.log(c.off_emission)
    return e


def _start_score(s: int, n: int, c: AlignmentConfig) -> float:
    if s == n:
        return -c.off_penalty
    if s == 0:
        return 0.0
    return -(c.skip_penalty * s)


def _path_key(path, n: int, c: AlignmentConfig):
    """Total order on equal-score paths, matching the engine's backtrace.

    Lexicographic from the final column backwards: final state (low step
    index first, OFF last), then per column the transition kind rank and
    the predecessor state.
    """
    key = [path[-1]]
    for t in range(len(path) - 1, 0, -1):
        _, kind = _transition(path[t - 1], path[t], n, c)
        key.append(kind)
        key.append(path[t - 1])
    return tuple(key)


def brute_force_align(protocol: Protocol, obs: list[Observation],
                      config: AlignmentConfig | None = None):
    """Enumerate all state paths; returns (path, logscore) with OFF as -1."""
    c = config or AlignmentConfig()
    n = len(protocol.steps)
    n_states = n + 1
    T = len(obs)
    if T == 0:
        raise ValueError("need at least one observation")
    if n_states ** T > MAX_PATHS:
        raise InstanceTooLarge(f"{n_states}^{T} paths exceeds {MAX_PATHS}")

    emit = _emission_matrix(protocol, obs, c)
    cost = np.empty((n_states, n_states), dtype=np.float64)
    for p in range(n_states):
        for s in range(n_states):
            cost[p, s] = _transition(p, s, n, c)[0]
    start = np.array([_start_score(s, n, c) for s in range(n_states)])

    m = n_states ** T
    cols = np.unravel_index(np.arange(m), (n_states,) * T)
    # Per-path accumulation, one term at a time, left to right.
    scores = start[cols[0]].copy()
    scores += emit[0][cols[0]]
    for t in range(1, T):
        scores -= cost[cols[t - 1], cols[t]]
        scores += emit[t][cols[t]]

    best = scores.max()
    tied = np.nonzero(scores == best)[0]
    paths = [[int(cols[t][i]) for t in range(T)] for i in tied]
    winner = min(paths, key=lambda pth: _path_key(pth, n, c))
    return [OFF if s == n else s for s in winner], float(best)
