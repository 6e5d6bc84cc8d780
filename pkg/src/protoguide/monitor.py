"""Rule-based deviation detection over the aligned observation stream.

Six deviation kinds: SterileBreach, StepMismatch, TimingDeviation,
SkippedStep, ParameterDeviation, UnknownAction.  Checks are pure
functions; DeviationMonitor threads the per-session state (previous
reported step, unknown-run counter) and assigns stable ids.
"""
from __future__ import annotations

from dataclasses import dataclass

from .alignment import OFF, AlignmentUpdate, StepSegmentation
from .gateway import Observation
from .protocol import Protocol, Step, UNKNOWN_LABEL

KINDS = (
    "SterileBreach",
    "StepMismatch",
    "TimingDeviation",
    "SkippedStep",
    "ParameterDeviation",
    "UnknownAction",
)

SEVERITIES = ("info", "warning", "critical")


@dataclass
class Deviation:
    kind: str
    severity: str
    t_start_ms: int
    t_end_ms: int
    message: str
    suggested_correction: str
    step_ref: int | None = None
    id: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown deviation kind '{self.kind}'")
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown severity '{self.severity}'")
        if self.t_start_ms > self.t_end_ms:
            raise ValueError("t_start_ms must be <= t_end_ms")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "severity": self.severity,
            "t_start_ms": self.t_start_ms,
            "t_end_ms": self.t_end_ms,
            "step_ref": self.step_ref,
            "message": self.message,
            "suggested_correction": self.suggested_correction,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Deviation":
        return cls(
            kind=obj["kind"],
            severity=obj["severity"],
            t_start_ms=obj["t_start_ms"],
            t_end_ms=obj["t_end_ms"],
            message=obj.get("message", ""),
            suggested_correction=obj.get("suggested_correction", ""),
            step_ref=obj.get("step_ref"),
            id=obj.get("id", 0),
        )


@dataclass(frozen=True)
class MonitorConfig:
    timing_tolerance_frac: float = 0.10   # fraction of the step's max duration
    mismatch_confidence: float = 0.6      # threshold for StepMismatch
    unknown_run_length: int = 3
    overdue_warnings: bool = False        # live warning past max + tol

    def __post_init__(self):
        if not 0 <= self.timing_tolerance_frac < 1:
            raise ValueError("timing_tolerance_frac must be in [0, 1)")
        if not 0 < self.mismatch_confidence <= 1:
            raise ValueError("mismatch_confidence must be in (0, 1]")
        if self.unknown_run_length < 1:
            raise ValueError("unknown_run_length must be >= 1")

    def to_json(self) -> dict:
        return {
            "timing_tolerance_frac": self.timing_tolerance_frac,
            "mismatch_confidence": self.mismatch_confidence,
            "unknown_run_length": self.unknown_run_length,
            "overdue_warnings": self.overdue_warnings,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MonitorConfig":
        return cls(**obj)


def check_timing(step: Step, realized_duration_ms: int, t_start_ms: int,
                 t_end_ms: int, config: MonitorConfig) -> Deviation | None:
    """Duration check on step exit; boundaries inclusive."""
    tol = config.timing_tolerance_frac * step.duration_max_ms
    if realized_duration_ms < step.duration_min_ms - tol:
        return Deviation(
            kind="TimingDeviation", severity="critical",
            t_start_ms=t_start_ms, t_end_ms=t_end_ms, step_ref=step.index,
            message=(f"step '{step.name}' took {realized_duration_ms} ms, "
                     f"below minimum {step.duration_min_ms} ms"),
            suggested_correction=f"Hold '{step.name}' for at least "
                                 f"{step.duration_min_ms} ms before moving on.",
        )
    if realized_duration_ms > step.duration_max_ms + tol:
        return Deviation(
            kind="TimingDeviation", severity="critical",
            t_start_ms=t_start_ms, t_end_ms=t_end_ms, step_ref=step.index,
            message=(f"step '{step.name}' took {realized_duration_ms} ms, "
                     f"above maximum {step.duration_max_ms} ms"),
            suggested_correction=f"Complete '{step.name}' within "
                                 f"{step.duration_max_ms} ms.",
        )
    return None


def check_safety(step: Step | None, o: Observation) -> list[Deviation]:
    out = []
    if step is not None and step.requires_sterile:
        breach = [e for e in o.events if e in ("glove_removed", "non_sterile_contact")]
        if breach:
            out.append(Deviation(
                kind="SterileBreach", severity="critical",
                t_start_ms=o.t_ms, t_end_ms=o.t_ms, step_ref=step.index,
                message=f"sterile technique broken during '{step.name}' "
                        f"({', '.join(breach)})",
                suggested_correction="Stop, re-glove and re-sterilize the field "
                                     "before continuing.",
            ))
    if "spill" in o.events:
        out.append(Deviation(
            kind="SterileBreach", severity="warning",
            t_start_ms=o.t_ms, t_end_ms=o.t_ms,
            step_ref=None if step is None else step.index,
            message="spill detected",
            suggested_correction="Clean and decontaminate the affected area.",
        ))
    return out


def check_parameters(step: Step, o: Observation) -> list[Deviation]:
    specs = {(q.name, q.unit): q for q in step.parameters}
    out = []
    for m in o.measured_parameters:
        q = specs.get((m.name, m.unit))
        if q is None:
            out.append(Deviation(
                kind="ParameterDeviation", severity="info",
                t_start_ms=o.t_ms, t_end_ms=o.t_ms, step_ref=step.index,
                message=f"measured '{m.name}' [{m.unit}] has no matching spec "
                        f"on step '{step.name}' (no unit conversion applied)",
                suggested_correction="Verify the parameter name and unit.",
            ))
        elif abs(m.value - q.expected) > q.tolerance:
            out.append(Deviation(
                kind="ParameterDeviation", severity="critical",
                t_start_ms=o.t_ms, t_end_ms=o.t_ms, step_ref=step.index,
                message=(f"'{m.name}' = {m.value} {m.unit}, expected "
                         f"{q.expected} ± {q.tolerance} {q.unit}"),
                suggested_correction=f"Adjust '{m.name}' to "
                                     f"{q.expected} {q.unit}.",
            ))
    return out


class DeviationMonitor:
    """Per-session detector; feed every (observation, update) pair in order."""

    def __init__(self, protocol: Protocol, config: MonitorConfig | None = None):
        self.protocol = protocol
        self.config = config or MonitorConfig()
        self.deviations: list[Deviation] = []
        self._prev_reported: int | None = None
        self._unknown_run = 0
        self._unknown_run_start = 0
        self._step_entry_t: int | None = None
        self._overdue_flagged: set[int] = set()
        self._next_id = 1

    def _emit(self, devs: list[Deviation]) -> list[Deviation]:
        for d in devs:
            d.id = self._next_id
            self._next_id += 1
            self.deviations.append(d)
        return devs

    def _check_order(self, o: Observation, u: AlignmentUpdate) -> list[Deviation]:
        out = []
        i = u.reported_state
        # Confident observation of a step that is neither current nor next.
        if (i != OFF and o.action_label != UNKNOWN_LABEL
                and o.confidence >= self.config.mismatch_confidence):
            targets = [s.index for s in self.protocol.steps
                       if s.action_label == o.action_label]
            if targets and all(j not in (i, i + 1) for j in targets):
                j = targets[0]
                out.append(Deviation(
                    kind="StepMismatch", severity="warning",
                    t_start_ms=o.t_ms, t_end_ms=o.t_ms, step_ref=j,
                    message=(f"action matches step {j} "
                             f"('{self.protocol.steps[j].name}') while step "
                             f"{i} ('{self.protocol.steps[i].name}') is current"),
                    suggested_correction=f"Return to step {i}: "
                                         f"{self.protocol.steps[i].name}.",
                ))
        # Forward jump in the reported trajectory: one deviation per skipped step.
        prev = self._prev_reported
        if prev is not None and prev != OFF and i != OFF and i - prev >= 2:
            for k in range(prev + 1, i):
                out.append(Deviation(
                    kind="SkippedStep", severity="warning",
                    t_start_ms=o.t_ms, t_end_ms=o.t_ms, step_ref=k,
                    message=f"step {k} ('{self.protocol.steps[k].name}') "
                            f"appears to have been skipped",
                    suggested_correction=f"Perform step {k}: "
                                         f"{self.protocol.steps[k].name}.",
                ))
        # Sustained unrecognized activity.
        if o.action_label == UNKNOWN_LABEL:
            if self._unknown_run == 0:
                self._unknown_run_start = o.t_ms
            self._unknown_run += 1
            if self._unknown_run == self.config.unknown_run_length:
                out.append(Deviation(
                    kind="UnknownAction", severity="info",
                    t_start_ms=self._unknown_run_start, t_end_ms=o.t_ms,
                    message=f"{self._unknown_run} consecutive unrecognized "
                            f"observations",
                    suggested_correction="Check camera framing; actions are not "
                                         "being recognized.",
                ))
        else:
            self._unknown_run = 0
        return out

    def on_observation(self, o: Observation, u: AlignmentUpdate) -> list[Deviation]:
        step = None if u.reported_state == OFF else self.protocol.steps[u.reported_state]
        devs = []
        devs.extend(check_safety(step, o))
        if step is not None:
            devs.extend(check_parameters(step, o))
        devs.extend(self._check_order(o, u))
        if step is not None and self.config.overdue_warnings:
            if u.state_changed:
                self._step_entry_t = o.t_ms
            entry = self._step_entry_t if self._step_entry_t is not None else o.t_ms
            tol = self.config.timing_tolerance_frac * step.duration_max_ms
            if (o.t_ms - entry > step.duration_max_ms + tol
                    and step.index not in self._overdue_flagged):
                self._overdue_flagged.add(step.index)
                devs.append(Deviation(
                    kind="TimingDeviation", severity="warning",
                    t_start_ms=entry, t_end_ms=o.t_ms, step_ref=step.index,
                    message=f"step '{step.name}' still active past its "
                            f"maximum duration",
                    suggested_correction=f"Wrap up '{step.name}' and move to "
                                         f"the next step.",
                ))
        if u.state_changed:
            self._step_entry_t = o.t_ms
        self._prev_reported = u.reported_state
        return self._emit(devs)

    def on_finalize(self, seg: StepSegmentation) -> list[Deviation]:
        """Timing checks over the final MAP segmentation, one per step interval."""
        devs = []
        for iv in seg.intervals:
            if iv.state == OFF:
                continue
            # Skip the duplicate when an overdue warning already covered it.
            if iv.state in self._overdue_flagged:
                continue
            step = self.protocol.steps[iv.state]
            d = check_timing(step, iv.t_end_ms - iv.t_start_ms,
                             iv.t_start_ms, iv.t_end_ms, self.config)
            if d is not None:
                devs.append(d)
        return self._emit(devs)
