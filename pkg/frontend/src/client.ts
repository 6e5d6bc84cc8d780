// Session client: handshake, envelope dispatch into the view model, and an
// operator-event queue that guarantees no event is silently lost — every
// event ends up either server-acked or visibly "unsent" in the view.

import {
  Envelope,
  OperatorEventKind,
  SCHEMA_VERSION,
  parseEnvelope,
} from "./types.js";
import {
  ConsoleSessionView,
  applyEnvelope,
  initialView,
} from "./viewmodel.js";

/** Anything that can carry NDJSON lines: a TCP socket, a WebSocket bridge,
 * or a scripted fake in tests. */
export interface Transport {
  send(line: string): void;
  close(): void;
}

export class ConsoleClient {
  view: ConsoleSessionView = initialView();
  private transport: Transport | null = null;
  private seq = 0;
  private sessionId: string;
  private handshaken = false;
  private listeners: Array<(view: ConsoleSessionView) => void> = [];

  constructor(sessionId: string) {
    this.sessionId = sessionId;
  }

  onChange(cb: (view: ConsoleSessionView) => void): void {
    this.listeners.push(cb);
  }

  private update(view: ConsoleSessionView): void {
    this.view = view;
    for (const cb of this.listeners) cb(view);
  }

  private envelope(type: string, payload: Record<string, any>): Envelope {
    return {
      type: type as Envelope["type"],
      session_id: this.sessionId,
      seq: this.seq++,
      schema_version: SCHEMA_VERSION,
      payload,
    };
  }

  private send(env: Envelope): void {
    if (!this.transport) throw new Error("not attached to a transport");
    this.transport.send(JSON.stringify(env) + "\n");
  }

  attach(transport: Transport): void {
    this.transport = transport;
    this.handshaken = false;
    this.update({ ...this.view, connection: "connecting" });
    this.send(this.envelope("hello", { versions: [SCHEMA_VERSION] }));
  }

  detach(): void {
    this.transport = null;
    this.handshaken = false;
    // In-flight events were never confirmed; surface them as unsent.
    this.update({
      ...this.view,
      connection: "closed",
      pendingEvents: this.view.pendingEvents.map((e) => ({
        ...e,
        state: "unsent" as const,
      })),
    });
  }

  startSession(protocolId: string, traceRef?: string, configs?: object): void {
    this.send(
      this.envelope("session_start", {
        protocol_id: protocolId,
        ...(traceRef !== undefined ? { trace_ref: traceRef } : {}),
        ...(configs !== undefined ? { configs } : {}),
      }),
    );
  }

  sendSegment(descriptor: Record<string, any>, inline?: object[]): void {
    this.send(
      this.envelope("segment", {
        descriptor,
        ...(inline !== undefined ? { inline_observations: inline } : {}),
      }),
    );
  }

  endSession(tMs?: number): void {
    this.send(
      this.envelope("session_end", tMs !== undefined ? { t_ms: tMs } : {}),
    );
  }

  sendOperatorEvent(
    kind: OperatorEventKind,
    target: number | null,
    tMs: number,
    text?: string,
  ): void {
    const connected = this.transport !== null && this.handshaken;
    const pending = {
      kind,
      target,
      t_ms: tMs,
      ...(text !== undefined ? { text } : {}),
      state: connected ? ("awaiting_ack" as const) : ("unsent" as const),
    };
    this.update({
      ...this.view,
      pendingEvents: [...this.view.pendingEvents, pending],
    });
    if (connected) this.transmitOperatorEvent(pending);
  }

  private transmitOperatorEvent(e: {
    kind: string;
    target: number | null;
    t_ms: number;
    text?: string;
  }): void {
    this.send(
      this.envelope("operator_event", {
        kind: e.kind,
        t_ms: e.t_ms,
        ...(e.target !== null ? { target: e.target } : {}),
        ...(e.text !== undefined ? { text: e.text } : {}),
      }),
    );
  }

  /** Re-send everything the operator did while offline. */
  private flushUnsent(): void {
    const unsent = this.view.pendingEvents.filter((e) => e.state === "unsent");
    if (!unsent.length) return;
    this.update({
      ...this.view,
      pendingEvents: this.view.pendingEvents.map((e) =>
        e.state === "unsent" ? { ...e, state: "awaiting_ack" as const } : e,
      ),
    });
    for (const e of unsent) this.transmitOperatorEvent(e);
  }

  handleLine(line: string): void {
    const trimmed = line.trim();
    if (!trimmed) return;
    const env = parseEnvelope(trimmed);
    if (env === null) {
      this.update({
        ...this.view,
        connection: "error",
        connectionError: `unparseable line: ${trimmed.slice(0, 80)}`,
      });
      return;
    }
    if (!this.handshaken && env.type === "ack" && "version" in env.payload) {
      if (String(env.payload.version) !== SCHEMA_VERSION) {
        this.update({
          ...this.view,
          connection: "error",
          connectionError: `server speaks schema ${env.payload.version}`,
        });
        return;
      }
      this.handshaken = true;
      this.update({ ...this.view, connection: "connected" });
      this.flushUnsent();
      return;
    }
    this.update(applyEnvelope(this.view, env));
  }
}

/** Split a byte stream into lines and hand them to the client. */
export function lineFeeder(client: ConsoleClient): (chunk: string) => void {
  let buf = "";
  return (chunk: string) => {
    buf += chunk;
    let nl;
    while ((nl = buf.indexOf("\n")) >= 0) {
      client.handleLine(buf.slice(0, nl));
      buf = buf.slice(nl + 1);
    }
  };
}
