"""Perception gateway: segment intake, backends, trace-driven oracle.

Raw video never enters the core; a SegmentDescriptor only carries an
opaque ``payload_ref``.  The bundled backend replays observations from an
NDJSON trace file, which makes the whole pipeline deterministic.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Protocol as Interface

from .errors import (
    BackendFailure,
    OutOfOrderSegment,
    OverlappingSegment,
    TraceBoundsError,
)

DEFAULT_FPS = 4.0
NOMINAL_SEGMENT_MS = (5000, 10000)
MAX_SEGMENT_MS = 60000

# Closed event vocabulary; safety rules key off these strings.
EVENT_VOCABULARY = frozenset({
    "glove_removed",
    "non_sterile_contact",
    "spill",
    "timer_started",
    "timer_stopped",
})


@dataclass(frozen=True)
class SegmentDescriptor:
    session_id: str
    seq_no: int
    t_start_ms: int
    t_end_ms: int
    fps: float = DEFAULT_FPS
    payload_ref: str = ""

    def __post_init__(self):
        if self.seq_no < 0:
            raise ValueError("seq_no must be >= 0")
        if self.t_end_ms <= self.t_start_ms:
            raise ValueError("t_end_ms must be > t_start_ms")
        dur = self.t_end_ms - self.t_start_ms
        if dur > MAX_SEGMENT_MS:
            raise ValueError(f"segment duration {dur} ms exceeds {MAX_SEGMENT_MS} ms")
        if not NOMINAL_SEGMENT_MS[0] <= dur <= NOMINAL_SEGMENT_MS[1]:
            warnings.warn(
                f"segment duration {dur} ms outside nominal "
                f"{NOMINAL_SEGMENT_MS[0]}-{NOMINAL_SEGMENT_MS[1]} ms",
                stacklevel=2,
            )

    @property
    def duration_ms(self) -> int:
        return self.t_end_ms - self.t_start_ms


@dataclass(frozen=True)
class MeasuredParameter:
    name: str
    value: float
    unit: str


@dataclass(frozen=True)
class Observation:
    session_id: str
    seq_no: int
    t_ms: int
    action_label: str
    confidence: float
    detected_materials: tuple[str, ...] = ()
    measured_parameters: tuple[MeasuredParameter, ...] = ()
    events: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")
        for e in self.events:
            if e not in EVENT_VOCABULARY:
                raise ValueError(f"unknown event '{e}'")

    def to_json(self) -> dict:
        return {
            "t_ms": self.t_ms,
            "action_label": self.action_label,
            "confidence": self.confidence,
            "detected_materials": list(self.detected_materials),
            "measured_parameters": [
                {"name": m.name, "value": m.value, "unit": m.unit}
                for m in self.measured_parameters
            ],
            "events": list(self.events),
        }

    @classmethod
    def from_json(cls, obj: dict, session_id: str, seq_no: int) -> "Observation":
        return cls(
            session_id=session_id,
            seq_no=seq_no,
            t_ms=int(obj["t_ms"]),
            action_label=str(obj["action_label"]),
            confidence=float(obj["confidence"]),
            detected_materials=tuple(obj.get("detected_materials", [])),
            measured_parameters=tuple(
                MeasuredParameter(m["name"], float(m["value"]), m["unit"])
                for m in obj.get("measured_parameters", [])
            ),
            events=tuple(obj.get("events", [])),
        )


def expected_frame_count(s: SegmentDescriptor) -> int:
    """Frames the backend will consume for this segment: ceil(dur * fps / 1000)."""
    return math.ceil(s.duration_ms * s.fps / 1000.0)


class PerceptionBackend(Interface):
    """Pluggable perception adapter."""

    name: str
    version: str

    def observe(self, s: SegmentDescriptor) -> list[Observation]:
        """Return observations for the segment, sorted by t_ms."""
        ...


@dataclass
class TraceFile:
    """Observation literals keyed by seq_no, loaded from NDJSON.

    File layout: one header line ``{"header": {...}}`` then one record per
    line ``{"seq_no": n, "observations": [...]}``.  Records may carry
    optional explicit ``t_start_ms``/``t_end_ms`` segment bounds; otherwise
    segment n spans ``[n * segment_ms, (n + 1) * segment_ms)`` with
    ``segment_ms`` taken from the header (default 5000).
    """

    header: dict = field(default_factory=dict)
    records: dict[int, list[dict]] = field(default_factory=dict)
    bounds: dict[int, tuple[int, int]] = field(default_factory=dict)

    @property
    def segment_ms(self) -> int:
        return int(self.header.get("segment_ms", 5000))

    def segment_bounds(self, seq_no: int) -> tuple[int, int]:
        if seq_no in self.bounds:
            return self.bounds[seq_no]
        return seq_no * self.segment_ms, (seq_no + 1) * self.segment_ms

    def max_seq_no(self) -> int:
        return max(self.records) if self.records else -1


def load_trace(text: str) -> TraceFile:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty trace file")
    head = json.loads(lines[0])
    if "header" not in head:
        raise ValueError("trace file must start with a header line")
    trace = TraceFile(header=head["header"])
    for ln in lines[1:]:
        rec = json.loads(ln)
        seq_no = int(rec["seq_no"])
        obs = sorted(rec.get("observations", []), key=lambda o: int(o["t_ms"]))
        trace.records[seq_no] = obs
        if "t_start_ms" in rec or "t_end_ms" in rec:
            trace.bounds[seq_no] = (int(rec["t_start_ms"]), int(rec["t_end_ms"]))
    return trace


def oracle_observe(s: SegmentDescriptor, trace: TraceFile) -> list[Observation]:
    """Deterministic trace playback; missing record means an empty segment."""
    recs = trace.records.get(s.seq_no, [])
    out = []
    for obj in recs:
        t = int(obj["t_ms"])
        if not s.t_start_ms <= t <= s.t_end_ms:
            raise TraceBoundsError(
                f"trace observation at t_ms={t} outside segment "
                f"[{s.t_start_ms}, {s.t_end_ms}] (seq_no={s.seq_no})"
            )
        out.append(Observation.from_json(obj, s.session_id, s.seq_no))
    return out


class TraceBackend:
    """PerceptionBackend over a TraceFile."""

    name = "trace-oracle"
    version = "1"

    def __init__(self, trace: TraceFile):
        self.trace = trace

    def observe(self, s: SegmentDescriptor) -> list[Observation]:
        return oracle_observe(s, self.trace)


@dataclass
class SubmissionAck:
    seq_no: int
    expected_frames: int


class SegmentGate:
    """Per-session ordering guard: monotone seq_no, no time overlap.

    Gaps between segments are legal (paused recording); overlaps are not.
    """

    def __init__(self, backend: PerceptionBackend):
        self.backend = backend
        self.last_seq_no = -1
        self.last_end_ms = -1

    def submit(self, s: SegmentDescriptor,
               inline: list[Observation] | None = None
               ) -> tuple[SubmissionAck, list[Observation]]:
        if s.seq_no <= self.last_seq_no:
            raise OutOfOrderSegment(
                f"seq_no {s.seq_no} <= last accepted {self.last_seq_no}"
            )
        if s.t_start_ms < self.last_end_ms:
            raise OverlappingSegment(
                f"segment starts at {s.t_start_ms} ms before previous end "
                f"{self.last_end_ms} ms"
            )
        try:
            obs = list(inline) if inline is not None else self.backend.observe(s)
        except Exception as e:
            # Segment quarantined; the session stays open and ordering
            # state is untouched so a corrected resubmit can follow.
            raise BackendFailure(f"backend failed on seq_no {s.seq_no}: {e}") from e
        obs = sorted(obs, key=lambda o: o.t_ms)
        self.last_seq_no = s.seq_no
        self.last_end_ms = s.t_end_ms
        return SubmissionAck(s.seq_no, expected_frame_count(s)), obs
