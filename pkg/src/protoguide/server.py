"""NDJSON-over-TCP transport for the session service."""
from __future__ import annotations

import json
import socketserver
import threading

from .errors import ProtoguideError, ProtocolViolation, SessionNotFound, UnknownProtocolId
from .session import SCHEMA_VERSION, Envelope, SessionService


class WireConnection:
    """One client connection: hello handshake, then envelope dispatch.

    ``handle_line`` returns (outbound lines, close connection).
    """

    def __init__(self, service: SessionService):
        self.service = service
        self.ready = False
        self._lock = threading.Lock()

    def _error(self, session_id: str, message: str) -> str:
        env = Envelope("error", session_id, 0, {"message": message})
        return env.to_line()

    def handle_line(self, line: str) -> tuple[list[str], bool]:
        line = line.strip()
        if not line:
            return [], False
        try:
            obj = json.loads(line)
            env = Envelope.from_json(obj)
        except (json.JSONDecodeError, ProtocolViolation) as e:
            return [self._error("", f"bad envelope: {e}")], True

        if not self.ready:
            if env.type != "hello":
                return [self._error(env.session_id,
                                    "handshake required before traffic")], True
            versions = env.payload.get("versions", [])
            if SCHEMA_VERSION not in [str(v) for v in versions]:
                return [self._error(env.session_id,
                                    f"no common schema version in {versions}")], True
            self.ready = True
            ack = Envelope("ack", env.session_id, 0,
                           {"version": SCHEMA_VERSION})
            return [ack.to_line()], False

        try:
            with self._lock:
                out = self.service.handle_envelope(env)
            return [o.to_line() for o in out], False
        except ProtocolViolation as e:
            return [self._error(env.session_id, str(e))], True
        except (SessionNotFound, UnknownProtocolId) as e:
            return [self._error(env.session_id, str(e))], False
        except ProtoguideError as e:
            # Segment quarantined or similar; session stays open.
            return [self._error(env.session_id, str(e))], False


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        conn = WireConnection(self.server.service)  # type: ignore[attr-defined]
        for raw in self.rfile:
            out, close = conn.handle_line(raw.decode("utf-8"))
            for line in out:
                self.wfile.write(line.encode("utf-8"))
            self.wfile.flush()
            if close:
                break


class SessionTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr: tuple[str, int], service: SessionService):
        super().__init__(addr, _Handler)
        self.service = service


def serve_forever(host: str, port: int, service: SessionService) -> None:
    with SessionTCPServer((host, port), service) as srv:
        srv.serve_forever()
