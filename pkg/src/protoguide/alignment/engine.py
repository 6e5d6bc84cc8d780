"""Online step alignment: a Viterbi decode over steps plus an OFF state.

The lattice has one state per protocol step and one OFF state for
off-protocol activity.  Each observation advances the DP by one column;
``finalize`` backtraces the global MAP path and merges it into timed step
intervals.  All arithmetic is float64 with a fixed evaluation order so
replays are bit-stable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptySession, NonMonotoneTimestamp
from ..gateway import Observation
from ..protocol import Protocol, UNKNOWN_LABEL
from .kernels import viterbi_step

# Reported-state value for the OFF (off-protocol) state.
OFF = -1


@dataclass(frozen=True)
class AlignmentConfig:
    mismatch_floor: float = 1e-3        # emission for a non-matching label
    off_emission: float = 1e-2          # emission of the OFF state
    skip_penalty: float = math.log(10)  # per skipped step
    regress_penalty: float = math.log(100)
    off_penalty: float = math.log(50)   # entering or leaving OFF
    confidence_floor: float = 1e-6
    report_margin: float = 0.0          # hysteresis for the reported state

    def __post_init__(self):
        if not 0 < self.mismatch_floor < 1:
            raise ValueError("mismatch_floor must be in (0, 1)")
        if not 0 < self.off_emission < 1:
            raise ValueError("off_emission must be in (0, 1)")
        for name in ("skip_penalty", "regress_penalty", "off_penalty", "report_margin"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 < self.confidence_floor < 1:
            raise ValueError("confidence_floor must be in (0, 1)")

    def to_json(self) -> dict:
        return {
            "mismatch_floor": self.mismatch_floor,
            "off_emission": self.off_emission,
            "skip_penalty": self.skip_penalty,
            "regress_penalty": self.regress_penalty,
            "off_penalty": self.off_penalty,
            "confidence_floor": self.confidence_floor,
            "report_margin": self.report_margin,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AlignmentConfig":
        return cls(**obj)


@dataclass
class AlignmentUpdate:
    obs_index: int
    reported_state: int            # step index, or OFF
    map_logscore: float
    state_changed: bool
    tentative_step_entry: tuple[int, int] | None = None  # (step, t_ms)


@dataclass(frozen=True)
class Interval:
    state: int  # step index, or OFF
    t_start_ms: int
    t_end_ms: int


@dataclass
class StepSegmentation:
    intervals: list[Interval]

    def step_intervals(self) -> list[Interval]:
        return [iv for iv in self.intervals if iv.state != OFF]

    def visited_steps(self) -> list[int]:
        return [iv.state for iv in self.intervals if iv.state != OFF]


class AlignmentState:
    """One DP lattice per session; single-writer."""

    def __init__(self, protocol: Protocol, config: AlignmentConfig):
        self.protocol = protocol
        self.config = config
        n = len(protocol.steps)
        self.n_steps = n
        self._off = n  # internal index of the OFF state
        scores = np.empty(n + 1, dtype=np.float64)
        scores[0] = 0.0
        for i in range(1, n):
            scores[i] = -(config.skip_penalty * i)
        scores[n] = -config.off_penalty
        self.scores = scores
        self.T = 0
        self.last_t_ms: int | None = None
        self._obs_times: list[int] = []
        self._bp_history: list[np.ndarray] = []
        self._entry_ts = np.zeros(n + 1, dtype=np.int64)
        self._reported: int | None = None  # internal state index
        self._labels = [s.action_label for s in protocol.steps]

    def _emissions(self, o: Observation) -> np.ndarray:
        c = self.config
        emit = np.empty(self.n_steps + 1, dtype=np.float64)
        log_mismatch = math.log(c.mismatch_floor)
        if o.action_label == UNKNOWN_LABEL:
            emit[:self.n_steps] = log_mismatch
        else:
            log_match = math.log(max(o.confidence, c.confidence_floor))
            for i, lab in enumerate(self._labels):
                emit[i] = log_match if lab == o.action_label else log_mismatch
        emit[self._off] = math.log(c.off_emission)
        return emit

    def ingest(self, o: Observation) -> AlignmentUpdate:
        if self.last_t_ms is not None and o.t_ms < self.last_t_ms:
            raise NonMonotoneTimestamp(
                f"observation at {o.t_ms} ms before previous {self.last_t_ms} ms"
            )
        emit = self._emissions(o)
        if self.T == 0:
            new_scores = self.scores + emit
            bp = np.arange(self.n_steps + 1, dtype=np.int64)
            self._entry_ts[:] = o.t_ms
        else:
            new_scores, bp = viterbi_step(
                self.scores, emit,
                self.config.skip_penalty, self.config.regress_penalty,
                self.config.off_penalty,
            )
            entry = self._entry_ts
            new_entry = np.where(bp == np.arange(self.n_steps + 1), entry[bp], o.t_ms)
            self._entry_ts = new_entry.astype(np.int64)
        self.scores = new_scores
        self._bp_history.append(bp)
        self._obs_times.append(o.t_ms)
        self.T += 1
        self.last_t_ms = o.t_ms

        argmax = int(np.argmax(new_scores))  # ties: lowest step index, OFF last
        map_logscore = float(new_scores[argmax])
        best = argmax
        if self.config.report_margin > 0 and self._reported is not None:
            if new_scores[argmax] - new_scores[self._reported] <= self.config.report_margin:
                best = self._reported
        changed = best != self._reported
        self._reported = best
        reported = OFF if best == self._off else best
        entry_info = None
        if changed and reported != OFF:
            entry_info = (reported, int(self._entry_ts[best]))
        return AlignmentUpdate(
            obs_index=self.T - 1,
            reported_state=reported,
            map_logscore=map_logscore,
            state_changed=changed,
            tentative_step_entry=entry_info,
        )

    def map_path(self) -> list[int]:
        """Backtrace the global MAP state path (OFF as -1)."""
        if self.T == 0:
            raise EmptySession("no observations ingested")
        s = int(np.argmax(self.scores))
        path = [s]
        for t in range(self.T - 1, 0, -1):
            s = int(self._bp_history[t][s])
            path.append(s)
        path.reverse()
        return [OFF if x == self._off else x for x in path]

    def finalize(self, session_end_ms: int) -> StepSegmentation:
        """Merge the MAP path into intervals; boundaries at observation midpoints."""
        path = self.map_path()
        times = self._obs_times
        intervals: list[Interval] = []
        run_start_t = times[0]
        run_state = path[0]
        for i in range(1, len(path)):
            if path[i] != run_state:
                boundary = (times[i - 1] + times[i]) // 2
                intervals.append(Interval(run_state, run_start_t, boundary))
                run_state = path[i]
                run_start_t = boundary
        intervals.append(Interval(run_state, run_start_t, session_end_ms))
        return StepSegmentation(intervals)


def init_alignment(p: Protocol, c: AlignmentConfig | None = None) -> AlignmentState:
    return AlignmentState(p, c or AlignmentConfig())
