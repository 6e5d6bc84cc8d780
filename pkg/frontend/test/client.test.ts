// Client behavior against a scripted transport: handshake, the unsent
// operator-event queue, and active-marker movement only on server ack.

import { describe, expect, it } from "vitest";
import { ConsoleClient, Transport } from "../src/client.js";
import { SCHEMA_VERSION } from "../src/types.js";

class FakeTransport implements Transport {
  sent: any[] = [];
  closed = false;
  send(line: string): void {
    this.sent.push(JSON.parse(line));
  }
  close(): void {
    this.closed = true;
  }
}

function handshake(client: ConsoleClient, t: FakeTransport): void {
  client.attach(t);
  expect(t.sent[0].type).toBe("hello");
  expect(t.sent[0].payload.versions).toEqual([SCHEMA_VERSION]);
  client.handleLine(
    JSON.stringify({
      type: "ack",
      session_id: "",
      seq: 0,
      schema_version: SCHEMA_VERSION,
      payload: { version: SCHEMA_VERSION },
    }),
  );
  expect(client.view.connection).toBe("connected");
}

function serverAck(kind: string, target: number | null) {
  return JSON.stringify({
    type: "ack",
    session_id: "s1",
    seq: 1,
    schema_version: SCHEMA_VERSION,
    payload: { acked: "operator_event", kind, target },
  });
}

describe("handshake", () => {
  it("rejects a server speaking a different schema version", () => {
    const client = new ConsoleClient("s1");
    const t = new FakeTransport();
    client.attach(t);
    client.handleLine(
      JSON.stringify({
        type: "ack",
        session_id: "",
        seq: 0,
        schema_version: "2",
        payload: { version: "2" },
      }),
    );
    expect(client.view.connection).toBe("error");
    expect(client.view.connectionError).toContain("schema");
  });
});

describe("operator events", () => {
  it("events sent while connected await the server's ack", () => {
    const client = new ConsoleClient("s1");
    const t = new FakeTransport();
    handshake(client, t);

    client.sendOperatorEvent("note", null, 1000, "looks dry");
    expect(client.view.pendingEvents).toEqual([
      expect.objectContaining({ kind: "note", state: "awaiting_ack" }),
    ]);
    client.handleLine(serverAck("note", null));
    expect(client.view.pendingEvents).toHaveLength(0);
  });

  it("events during disconnect queue as unsent and flush on reconnect", () => {
    const client = new ConsoleClient("s1");
    client.sendOperatorEvent("pause", null, 2000);
    expect(client.view.pendingEvents[0].state).toBe("unsent");

    const t = new FakeTransport();
    handshake(client, t);
    // flushed: the wire now carries the queued event, state is awaiting_ack
    const wired = t.sent.filter((e) => e.type === "operator_event");
    expect(wired).toHaveLength(1);
    expect(wired[0].payload.kind).toBe("pause");
    expect(client.view.pendingEvents[0].state).toBe("awaiting_ack");

    client.handleLine(serverAck("pause", null));
    expect(client.view.pendingEvents).toHaveLength(0);
  });

  it("in-flight events fall back to unsent when the connection drops", () => {
    const client = new ConsoleClient("s1");
    const t = new FakeTransport();
    handshake(client, t);
    client.sendOperatorEvent("force_advance", 2, 3000);
    expect(client.view.pendingEvents[0].state).toBe("awaiting_ack");
    client.detach();
    expect(client.view.connection).toBe("closed");
    expect(client.view.pendingEvents[0].state).toBe("unsent");
  });
});

describe("force_advance", () => {
  it("moves the active marker only after the server ack", () => {
    const client = new ConsoleClient("s1");
    const t = new FakeTransport();
    handshake(client, t);
    client.handleLine(
      JSON.stringify({
        type: "ack",
        session_id: "s1",
        seq: 0,
        schema_version: SCHEMA_VERSION,
        payload: {
          session: "started",
          protocol_id: "p",
          steps: [0, 1, 2, 3].map((i) => ({
            index: i,
            id: `step${i}`,
            name: `Step ${i}`,
          })),
        },
      }),
    );
    expect(client.view.currentStep).toBe(0);

    client.sendOperatorEvent("force_advance", 3, 4000);
    // not yet acked: marker unchanged
    expect(client.view.currentStep).toBe(0);
    expect(client.view.steps[3].status).toBe("pending");

    client.handleLine(serverAck("force_advance", 3));
    expect(client.view.currentStep).toBe(3);
    expect(client.view.steps[3].status).toBe("active");
    expect(client.view.pendingEvents).toHaveLength(0);
  });
});
