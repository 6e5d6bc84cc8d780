"""Session service: wire envelopes, lifecycle, append-only log, replay.

The wire format is newline-delimited JSON: one envelope object per line,
UTF-8, canonically serialized (sorted keys, compact separators) so that a
replayed session reproduces the recorded outbound bytes exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .alignment import OFF, AlignmentConfig, AlignmentState, StepSegmentation
from .errors import (
    CorruptLog,
    EmptySession,
    ProtocolHashMismatch,
    ProtocolViolation,
    SessionNotFinalized,
    SessionNotFound,
    UnknownProtocolId,
)
from .gateway import (
    Observation,
    SegmentDescriptor,
    SegmentGate,
    TraceBackend,
    TraceFile,
)
from .monitor import Deviation, DeviationMonitor, MonitorConfig
from .protocol import Protocol, parse_protocol, protocol_hash, serialize_protocol

SCHEMA_VERSION = "1"
ENVELOPE_TYPES = {
    "hello", "session_start", "segment", "observations", "feedback",
    "operator_event", "error", "session_end", "ack",
}
OPERATOR_EVENT_KINDS = {"acknowledge_deviation", "force_advance", "pause",
                        "resume", "note"}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class Envelope:
    type: str
    session_id: str
    seq: int
    payload: dict
    schema_version: str = SCHEMA_VERSION

    def to_json(self) -> dict:
        return {
            "type": self.type,
            "session_id": self.session_id,
            "seq": self.seq,
            "schema_version": self.schema_version,
            "payload": self.payload,
        }

    def to_line(self) -> str:
        return canonical_json(self.to_json()) + "\n"

    @classmethod
    def from_json(cls, obj: dict) -> "Envelope":
        try:
            env = cls(
                type=obj["type"],
                session_id=obj.get("session_id", ""),
                seq=int(obj["seq"]),
                payload=obj.get("payload", {}),
                schema_version=str(obj.get("schema_version", SCHEMA_VERSION)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ProtocolViolation(f"malformed envelope: {e}") from e
        if env.type not in ENVELOPE_TYPES:
            raise ProtocolViolation(f"unknown envelope type '{env.type}'")
        return env


class SessionLog:
    """Append-only NDJSON log; self-contained for replay."""

    def __init__(self, header: dict, stream=None):
        self.header = header
        self.records: list[dict] = []
        self._stream = stream
        if stream is not None:
            stream.write(canonical_json({"header": header}) + "\n")
            stream.flush()

    def append(self, kind: str, t_ms: int, record: dict) -> None:
        rec = {"idx": len(self.records), "kind": kind, "t_ms": t_ms,
               "record": record}
        self.records.append(rec)
        if self._stream is not None:
            self._stream.write(canonical_json(rec) + "\n")
            self._stream.flush()

    def to_text(self) -> str:
        lines = [canonical_json({"header": self.header})]
        lines.extend(canonical_json(r) for r in self.records)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SessionLog":
        lines = text.splitlines()
        if not lines:
            raise CorruptLog("empty log")
        try:
            head = json.loads(lines[0])
            header = head["header"]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise CorruptLog(f"bad log header: {e}") from e
        log = cls(header)
        last_ok = -1
        for i, ln in enumerate(lines[1:]):
            if not ln.strip():
                continue
            try:
                rec = json.loads(ln)
                idx = rec["idx"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise CorruptLog(f"bad record at line {i + 2}: {e}",
                                 last_valid_record=last_ok) from e
            if idx != len(log.records):
                raise CorruptLog(f"record index gap at line {i + 2}",
                                 last_valid_record=last_ok)
            log.records.append(rec)
            last_ok = idx
        return log

    def inbound(self) -> list[Envelope]:
        return [Envelope.from_json(r["record"]) for r in self.records
                if r["kind"] == "in"]

    def outbound(self) -> list[dict]:
        return [r["record"] for r in self.records if r["kind"] == "out"]

    def observations(self) -> list[dict]:
        return [r["record"] for r in self.records if r["kind"] == "obs"]


def _segmentation_json(seg: StepSegmentation, protocol: Protocol) -> list[dict]:
    out = []
    for iv in seg.intervals:
        if iv.state == OFF:
            out.append({"state": "off_protocol", "t_start_ms": iv.t_start_ms,
                        "t_end_ms": iv.t_end_ms})
        else:
            out.append({"state": iv.state,
                        "step_id": protocol.steps[iv.state].id,
                        "t_start_ms": iv.t_start_ms, "t_end_ms": iv.t_end_ms})
    return out


def _descriptor_from_json(obj: dict, session_id: str) -> SegmentDescriptor:
    try:
        return SegmentDescriptor(
            session_id=session_id,
            seq_no=int(obj["seq_no"]),
            t_start_ms=int(obj["t_start_ms"]),
            t_end_ms=int(obj["t_end_ms"]),
            fps=float(obj.get("fps", 4)),
            payload_ref=str(obj.get("payload_ref", "")),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ProtocolViolation(f"bad segment descriptor: {e}") from e


class Session:
    def __init__(self, session_id: str, protocol: Protocol, document: str,
                 align_cfg: AlignmentConfig, mon_cfg: MonitorConfig,
                 backend, log_stream=None, wall_clock: str | None = None,
                 participants: dict | None = None):
        self.session_id = session_id
        self.protocol = protocol
        self.align_cfg = align_cfg
        self.mon_cfg = mon_cfg
        self.gate = SegmentGate(backend)
        self.engine = AlignmentState(protocol, align_cfg)
        self.monitor = DeviationMonitor(protocol, mon_cfg)
        self.pinned_step: int | None = None
        self.finalized = False
        self.segmentation: StepSegmentation | None = None
        self.last_in_seq = -1
        self.out_seq = 0
        self.last_segment_end_ms = 0
        header = {
            "log_version": "1",
            "session_id": session_id,
            "protocol_id": protocol.id,
            "protocol_version": protocol.version,
            "protocol_hash": protocol_hash(protocol),
            "protocol_document": document,
            "alignment_config": align_cfg.to_json(),
            "monitor_config": mon_cfg.to_json(),
            "started_wall_clock": wall_clock
            or datetime.now(timezone.utc).isoformat(),
            "participants": participants or {},
        }
        self.log = SessionLog(header, stream=log_stream)

    # -- helpers -------------------------------------------------------

    def _current_step(self) -> int:
        """Displayed step: engine argmax, overridden by a force_advance pin."""
        reported = 0 if self.engine.T == 0 else (
            OFF if self.engine._reported == self.engine.n_steps
            else self.engine._reported)
        if self.pinned_step is not None:
            if reported == self.pinned_step:
                self.pinned_step = None  # engine caught up; pin dissolves
            else:
                return self.pinned_step
        return reported

    def _guidance(self, current: int) -> str:
        steps = self.protocol.steps
        if current == OFF:
            return "Off protocol: return to the procedure."
        if self.engine.T == 0:
            return f"Start with: {steps[0].description or steps[0].name}"
        if current + 1 < len(steps):
            nxt = steps[current + 1]
            return f"Next: {nxt.description or nxt.name}"
        return "Final step: finish and end the session."

    def _feedback(self, t_ms: int, deviations: list[Deviation],
                  summary: dict | None = None) -> "Envelope":
        current = self._current_step()
        payload = {
            "t_ms": t_ms,
            "current_step": "off_protocol" if current == OFF else current,
            "step_name": "" if current == OFF
            else self.protocol.steps[current].name,
            "guidance": self._guidance(current),
            "deviations": [d.to_json() for d in deviations],
            "session_summary": summary,
        }
        env = Envelope("feedback", self.session_id, self.out_seq, payload)
        self.out_seq += 1
        return env

    def _ack(self, payload: dict) -> "Envelope":
        env = Envelope("ack", self.session_id, self.out_seq, payload)
        self.out_seq += 1
        return env

    # -- envelope handlers ---------------------------------------------

    def process_segment(self, env: Envelope) -> list[Envelope]:
        if self.finalized:
            raise ProtocolViolation("segment after session_end")
        desc = _descriptor_from_json(env.payload.get("descriptor", {}),
                                     self.session_id)
        inline = env.payload.get("inline_observations")
        if inline is None:
            inline = env.payload.get("observations")
        inline_obs = None
        if inline is not None:
            inline_obs = [Observation.from_json(o, self.session_id, desc.seq_no)
                          for o in inline]
        ack, observations = self.gate.submit(desc, inline=inline_obs)
        self.last_segment_end_ms = desc.t_end_ms
        new_devs: list[Deviation] = []
        for o in observations:
            update = self.engine.ingest(o)
            self.log.append("obs", o.t_ms,
                            {"seq_no": o.seq_no, **o.to_json()})
            self.log.append("update", o.t_ms, {
                "obs_index": update.obs_index,
                "reported_state": update.reported_state,
                "map_logscore": update.map_logscore,
                "state_changed": update.state_changed,
            })
            new_devs.extend(self.monitor.on_observation(o, update))
        fb = self._feedback(desc.t_end_ms, new_devs)
        return [fb]

    def process_operator_event(self, env: Envelope) -> list[Envelope]:
        p = env.payload
        kind = p.get("kind")
        if kind not in OPERATOR_EVENT_KINDS:
            raise ProtocolViolation(f"unknown operator event kind '{kind}'")
        target = p.get("target")
        if kind == "force_advance":
            if (not isinstance(target, int)
                    or not 0 <= target < len(self.protocol.steps)):
                raise ProtocolViolation("force_advance needs a valid step index")
            self.pinned_step = target
            self.log.append("pin", int(p.get("t_ms", 0)), {"step": target})
        if kind == "acknowledge_deviation":
            if not isinstance(target, int):
                raise ProtocolViolation(
                    "acknowledge_deviation needs a deviation id")
        return [self._ack({"acked": "operator_event", "kind": kind,
                           "target": target})]

    def process_session_end(self, env: Envelope) -> list[Envelope]:
        if self.finalized:
            raise ProtocolViolation("duplicate session_end")
        end_ms = int(env.payload.get("t_ms", self.last_segment_end_ms))
        try:
            seg = self.engine.finalize(end_ms)
            self.monitor.on_finalize(seg)
        except EmptySession:
            seg = StepSegmentation(intervals=[])
        self.segmentation = seg
        self.finalized = True
        all_devs = self.monitor.deviations
        rollup: dict[str, int] = {}
        for d in all_devs:
            rollup[d.kind] = rollup.get(d.kind, 0) + 1
        summary = {
            "segmentation": _segmentation_json(seg, self.protocol),
            "deviations": [d.to_json() for d in all_devs],
            "deviation_counts": dict(sorted(rollup.items())),
        }
        return [self._feedback(end_ms, [], summary=summary)]

    def handle(self, env: Envelope) -> list[Envelope]:
        if env.seq <= self.last_in_seq:
            raise ProtocolViolation(
                f"inbound seq {env.seq} not greater than {self.last_in_seq}")
        self.last_in_seq = env.seq
        self.log.append("in", int(env.payload.get("t_ms", 0)), env.to_json())
        if env.type in ("segment", "observations"):
            out = self.process_segment(env)
        elif env.type == "operator_event":
            out = self.process_operator_event(env)
        elif env.type == "session_end":
            out = self.process_session_end(env)
        else:
            raise ProtocolViolation(
                f"envelope type '{env.type}' not valid mid-session")
        for o in out:
            # Log-before-send: the record lands before the envelope leaves.
            self.log.append("out", int(o.payload.get("t_ms", 0)), o.to_json())
        return out


class SessionService:
    """Multi-session dispatcher; one Session per session_id."""

    def __init__(self, protocols: dict[str, tuple[Protocol, str]],
                 trace_loader=None, log_stream_factory=None,
                 wall_clock: str | None = None,
                 default_configs: dict | None = None):
        self.protocols = protocols
        self.trace_loader = trace_loader
        self.log_stream_factory = log_stream_factory
        self.wall_clock = wall_clock
        self.default_configs = default_configs or {}
        self.sessions: dict[str, Session] = {}

    def start_session(self, env: Envelope) -> list[Envelope]:
        p = env.payload
        sid = env.session_id
        if not sid:
            raise ProtocolViolation("session_start requires a session_id")
        if sid in self.sessions:
            raise ProtocolViolation(f"session '{sid}' already exists")
        proto_id = p.get("protocol_id")
        if proto_id not in self.protocols:
            raise UnknownProtocolId(f"unknown protocol id '{proto_id}'")
        protocol, document = self.protocols[proto_id]
        cfgs = {**self.default_configs, **(p.get("configs") or {})}
        align_cfg = AlignmentConfig.from_json(cfgs["alignment"]) \
            if "alignment" in cfgs else AlignmentConfig()
        mon_cfg = MonitorConfig.from_json(cfgs["monitor"]) \
            if "monitor" in cfgs else MonitorConfig()
        trace_ref = p.get("trace_ref")
        if trace_ref is not None:
            if self.trace_loader is None:
                raise ProtocolViolation("no trace loader configured")
            backend = TraceBackend(self.trace_loader(trace_ref))
        else:
            backend = TraceBackend(TraceFile())  # inline observations only
        stream = (self.log_stream_factory(sid)
                  if self.log_stream_factory else None)
        session = Session(sid, protocol, document, align_cfg, mon_cfg,
                          backend, log_stream=stream,
                          wall_clock=self.wall_clock,
                          participants=p.get("participants"))
        self.sessions[sid] = session
        session.last_in_seq = env.seq
        session.log.append("in", int(env.payload.get("t_ms", 0)), env.to_json())
        outline = [{"index": s.index, "id": s.id, "name": s.name}
                   for s in protocol.steps]
        ack = session._ack({"session": "started", "protocol_id": proto_id,
                            "steps": outline})
        session.log.append("out", 0, ack.to_json())
        return [ack]

    def handle_envelope(self, env: Envelope) -> list[Envelope]:
        if env.type == "session_start":
            return self.start_session(env)
        session = self.sessions.get(env.session_id)
        if session is None:
            raise SessionNotFound(f"no session '{env.session_id}'")
        return session.handle(env)


def replay_session(log: SessionLog) -> list[dict]:
    """Re-run the pipeline from a log's inbound envelopes.

    Returns the replayed outbound envelope objects; payloads are
    byte-identical to the originals once canonically serialized.  The
    replay is self-contained: the protocol document is embedded in the
    header and logged observations stand in for the perception backend.
    """
    header = log.header
    document = header.get("protocol_document")
    if not document:
        raise CorruptLog("log header missing protocol document")
    protocol = parse_protocol(document)
    if protocol_hash(protocol) != header.get("protocol_hash"):
        raise ProtocolHashMismatch(
            "embedded protocol does not match logged hash")

    # Rebuild a trace from logged observations, bounded by the logged
    # segment descriptors.
    trace = TraceFile(header={"protocol_id": header.get("protocol_id")})
    inbound = log.inbound()
    for rec in log.observations():
        rec = dict(rec)
        seq_no = rec.pop("seq_no")
        trace.records.setdefault(seq_no, []).append(rec)
    for env in inbound:
        if env.type in ("segment", "observations"):
            d = env.payload.get("descriptor", {})
            trace.bounds[int(d["seq_no"])] = (int(d["t_start_ms"]),
                                              int(d["t_end_ms"]))

    service = SessionService(
        {header["protocol_id"]: (protocol, document)},
        trace_loader=lambda ref: trace,
        wall_clock=header.get("started_wall_clock"),
    )
    out: list[dict] = []
    for env in inbound:
        if env.type == "session_start":
            payload = dict(env.payload)
            payload["trace_ref"] = "replay"
            payload.setdefault("configs", {})
            payload["configs"] = {
                "alignment": header["alignment_config"],
                "monitor": header["monitor_config"],
            }
            env = Envelope(env.type, env.session_id, env.seq, payload,
                           env.schema_version)
        try:
            outs = service.handle_envelope(env)
        except ProtocolViolation:
            # The original connection answered this with an error envelope
            # (not part of the session log); session state advanced the
            # same way, so just move on.
            continue
        for o in outs:
            out.append(o.to_json())
    return out


def verify_replay(log: SessionLog) -> bool:
    """True iff replaying the log reproduces the outbound payloads byte-for-byte."""
    replayed = replay_session(log)
    original = log.outbound()
    if len(replayed) != len(original):
        return False
    return all(canonical_json(a["payload"]) == canonical_json(b["payload"])
               for a, b in zip(replayed, original))


def export_stepwise_protocol(log: SessionLog) -> str:
    """Reconstruct an observed stepwise protocol document from a finalized log."""
    summary = None
    for rec in log.outbound():
        payload = rec.get("payload", {})
        if rec.get("type") == "feedback" and payload.get("session_summary"):
            summary = payload["session_summary"]
    if summary is None:
        raise SessionNotFinalized("log has no session summary")
    gold = parse_protocol(log.header["protocol_document"])
    obs_records = log.observations()

    steps = []
    materials: list[str] = []
    seen_ids: dict[str, int] = {}
    for seg in summary["segmentation"]:
        if seg["state"] == "off_protocol":
            continue
        gstep = gold.steps[seg["state"]]
        realized = max(1, seg["t_end_ms"] - seg["t_start_ms"])
        observed_mats: list[str] = []
        for rec in obs_records:
            if seg["t_start_ms"] <= rec["t_ms"] <= seg["t_end_ms"]:
                for m in rec.get("detected_materials", []):
                    if m not in observed_mats:
                        observed_mats.append(m)
        for m in observed_mats:
            if m not in materials:
                materials.append(m)
        n = seen_ids.get(gstep.id, 0)
        seen_ids[gstep.id] = n + 1
        steps.append({
            "index": len(steps),
            "id": gstep.id if n == 0 else f"{gstep.id}-repeat{n}",
            "name": gstep.name,
            "action_label": gstep.action_label,
            "description": gstep.description,
            "expected_duration_ms": [realized, realized],
            "required_materials": observed_mats,
            "parameters": [],
            "requires_sterile": gstep.requires_sterile,
            "skippable": gstep.skippable,
        })
    if not steps:
        raise SessionNotFinalized("session has no aligned step intervals")
    # Build via the document path so the result is guaranteed parseable.
    import yaml
    doc = yaml.safe_dump({
        "id": f"{gold.id}-observed",
        "title": f"{gold.title} (observed)",
        "version": gold.version,
        "materials": materials,
        "steps": steps,
    }, sort_keys=False, allow_unicode=True)
    parse_protocol(doc)  # round-trip check
    return doc
