"""Command-line entry points: serve, simulate, replay, score."""
from __future__ import annotations

import json
import os
import pathlib
import sys

import click
import yaml

from .errors import ProtoguideError
from .evalmetrics import ErrorEvent, SegmentLabel, load_gold, score_session
from .gateway import load_trace
from .protocol import Protocol, parse_protocol
from .session import (
    Envelope,
    SessionLog,
    SessionService,
    export_stepwise_protocol,
    replay_session,
    verify_replay,
)

CONFIG_ENV = "PROTOGUIDE_CONFIG"


def _load_default_configs() -> dict:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    with open(path, encoding="utf-8") as f:
        cfg = yaml.safe_load(f) or {}
    return {k: v for k, v in cfg.items() if k in ("alignment", "monitor")}


def _load_protocol_dir(path: str) -> dict[str, tuple[Protocol, str]]:
    out = {}
    for p in sorted(pathlib.Path(path).glob("*.y*ml")):
        text = p.read_text(encoding="utf-8")
        proto = parse_protocol(text)
        out[proto.id] = (proto, text)
    return out


@click.group()
def main():
    """Real-time lab-protocol conformance and guidance engine."""


@main.command()
@click.option("--listen", default="127.0.0.1:7700", show_default=True,
              help="host:port to bind")
@click.option("--protocol-dir", required=True, type=click.Path(exists=True),
              help="directory of protocol YAML documents")
@click.option("--trace-dir", type=click.Path(exists=True),
              help="directory resolved against session trace_ref values")
@click.option("--log-dir", default="logs", show_default=True,
              help="directory for session logs")
def serve(listen, protocol_dir, trace_dir, log_dir):
    """Run the NDJSON session server."""
    from .server import serve_forever

    host, _, port = listen.rpartition(":")
    protocols = _load_protocol_dir(protocol_dir)
    os.makedirs(log_dir, exist_ok=True)

    def trace_loader(ref):
        base = pathlib.Path(trace_dir) if trace_dir else pathlib.Path(".")
        return load_trace((base / ref).read_text(encoding="utf-8"))

    def log_stream_factory(session_id):
        return open(pathlib.Path(log_dir) / f"{session_id}.ndjson",
                    "w", encoding="utf-8")

    service = SessionService(protocols, trace_loader=trace_loader,
                             log_stream_factory=log_stream_factory,
                             default_configs=_load_default_configs())
    click.echo(f"serving {len(protocols)} protocol(s) on {host}:{port}")
    serve_forever(host or "127.0.0.1", int(port), service)


@main.command()
@click.option("--protocol", "protocol_path", required=True,
              type=click.Path(exists=True))
@click.option("--trace", "trace_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--session-id", default="sim")
def simulate(protocol_path, trace_path, out_path, session_id):
    """Drive a full session from a trace file and write its log."""
    document = pathlib.Path(protocol_path).read_text(encoding="utf-8")
    protocol = parse_protocol(document)
    trace = load_trace(pathlib.Path(trace_path).read_text(encoding="utf-8"))
    log = run_simulation(protocol, document, trace, session_id,
                         default_configs=_load_default_configs())
    pathlib.Path(out_path).write_text(log.to_text(), encoding="utf-8")
    n_seg = sum(1 for r in log.records if r["kind"] == "in"
                and r["record"]["type"] == "segment")
    click.echo(f"simulated {n_seg} segment(s); log written to {out_path}")


def run_simulation(protocol: Protocol, document: str, trace, session_id="sim",
                   default_configs=None, configs=None) -> SessionLog:
    """Feed every trace record through the full pipeline; returns the log."""
    service = SessionService({protocol.id: (protocol, document)},
                             trace_loader=lambda ref: trace,
                             wall_clock="1970-01-01T00:00:00+00:00",
                             default_configs=default_configs)
    seq = 0
    payload = {"protocol_id": protocol.id, "trace_ref": "trace"}
    if configs:
        payload["configs"] = configs
    service.handle_envelope(Envelope("session_start", session_id, seq, payload))
    last_end = 0
    for seq_no in sorted(trace.records):
        t0, t1 = trace.segment_bounds(seq_no)
        seq += 1
        service.handle_envelope(Envelope("segment", session_id, seq, {
            "descriptor": {"seq_no": seq_no, "t_start_ms": t0,
                           "t_end_ms": t1},
        }))
        last_end = t1
    seq += 1
    service.handle_envelope(Envelope("session_end", session_id, seq,
                                     {"t_ms": last_end}))
    return service.sessions[session_id].log


@main.command()
@click.argument("log_path", type=click.Path(exists=True))
@click.option("--export", "export_path", type=click.Path(),
              help="also write the reconstructed stepwise protocol here")
def replay(log_path, export_path):
    """Re-run a session log and verify byte-identical outbound payloads."""
    log = SessionLog.from_text(
        pathlib.Path(log_path).read_text(encoding="utf-8"))
    try:
        ok = verify_replay(log)
    except ProtoguideError as e:
        click.echo(f"replay failed: {e}", err=True)
        sys.exit(2)
    n_out = len(log.outbound())
    click.echo(f"replayed {n_out} outbound envelope(s): "
               f"{'byte-identical' if ok else 'MISMATCH'}")
    if export_path:
        pathlib.Path(export_path).write_text(export_stepwise_protocol(log),
                                             encoding="utf-8")
        click.echo(f"stepwise protocol exported to {export_path}")
    if not ok:
        sys.exit(1)


def predictions_from_log(log: SessionLog) -> tuple[list[SegmentLabel],
                                                   list[ErrorEvent]]:
    summary = None
    for rec in log.outbound():
        payload = rec.get("payload", {})
        if rec.get("type") == "feedback" and payload.get("session_summary"):
            summary = payload["session_summary"]
    if summary is None:
        raise ProtoguideError("log has no session summary; "
                              "was the session ended?")
    segs = [SegmentLabel(s["step_id"], s["t_start_ms"], s["t_end_ms"])
            for s in summary["segmentation"] if s["state"] != "off_protocol"]
    errs = [ErrorEvent(d["kind"], d["t_start_ms"], d["t_end_ms"],
                       d.get("step_ref"))
            for d in summary["deviations"]]
    return segs, errs


def _load_predictions(path: str) -> tuple[list[SegmentLabel], list[ErrorEvent]]:
    text = pathlib.Path(path).read_text(encoding="utf-8")
    first = text.splitlines()[0] if text.splitlines() else ""
    if first.strip().startswith("{") and "header" in json.loads(first):
        return predictions_from_log(SessionLog.from_text(text))
    gold_like = load_gold(text)
    return gold_like.segments, gold_like.errors


@main.command()
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True),
              help="session log or prediction NDJSON")
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--iou", default=0.5, show_default=True)
@click.option("--window-ms", default=10000, show_default=True)
@click.option("--json", "json_out", is_flag=True, help="emit JSON only")
def score(pred_path, gold_path, iou, window_ms, json_out):
    """Score predictions against a gold annotation file."""
    segs, errs = _load_predictions(pred_path)
    gold = load_gold(pathlib.Path(gold_path).read_text(encoding="utf-8"))
    report = score_session(segs, errs, gold, iou_threshold=iou,
                           window_ms=window_ms)
    if json_out:
        click.echo(json.dumps(report.to_json(), indent=2))
    else:
        click.echo(report.table())
        click.echo(json.dumps(report.to_json()))


if __name__ == "__main__":
    main()
