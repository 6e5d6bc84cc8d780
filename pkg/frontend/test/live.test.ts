// [SECONDARY acceptance] Console conformance, part 2, against a live
// server: a force_advance round-trips to the server log and back within
// one segment cadence.

import { spawn, ChildProcess } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ConsoleClient } from "../src/client.js";
import { connectTcp } from "../src/tcp.js";
import { ConsoleSessionView } from "../src/viewmodel.js";

const ROOT = path.resolve(__dirname, "..", "..");
const SAMPLES = path.join(ROOT, "samples");
const SEGMENT_CADENCE_MS = 5000;

let server: ChildProcess;
let logDir: string;
let port: number;

function waitFor(
  client: ConsoleClient,
  pred: (v: ConsoleSessionView) => boolean,
  what: string,
  timeoutMs = SEGMENT_CADENCE_MS,
): Promise<ConsoleSessionView> {
  if (pred(client.view)) return Promise.resolve(client.view);
  return new Promise((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error(`timed out waiting for ${what}`)),
      timeoutMs,
    );
    client.onChange((v) => {
      if (pred(v)) {
        clearTimeout(timer);
        resolve(v);
      }
    });
  });
}

beforeAll(async () => {
  logDir = fs.mkdtempSync(path.join(os.tmpdir(), "bench-console-"));
  port = 20000 + Math.floor(Math.random() * 20000);
  server = spawn(
    "python3",
    [
      "-m",
      "protoguide.cli",
      "serve",
      "--listen",
      `127.0.0.1:${port}`,
      "--protocol-dir",
      SAMPLES,
      "--trace-dir",
      SAMPLES,
      "--log-dir",
      logDir,
    ],
    { cwd: ROOT, stdio: ["ignore", "pipe", "pipe"] },
  );
  await new Promise<void>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server start timeout")), 20000);
    server.stdout!.on("data", (chunk: Buffer) => {
      if (chunk.toString().includes("serving")) {
        clearTimeout(timer);
        resolve();
      }
    });
    server.on("exit", (code) => reject(new Error(`server exited: ${code}`)));
  });
}, 30000);

afterAll(() => {
  if (server) server.kill();
});

describe("live session over TCP", () => {
  it("force_advance round-trips to the server log and back within one cadence", async () => {
    const client = new ConsoleClient("live-1");
    const transport = await connectTcp(client, "127.0.0.1", port);
    await waitFor(client, (v) => v.connection === "connected", "handshake");

    client.startSession("cell-staining-v1", "session_trace.ndjson");
    await waitFor(client, (v) => v.steps.length > 0, "session_start ack");
    expect(client.view.steps.map((s) => s.id)).toEqual(["wash", "fix", "stain"]);
    expect(client.view.currentStep).toBe(0);

    // the samples trace is cut into 10 s segments
    client.sendSegment({ seq_no: 0, t_start_ms: 0, t_end_ms: 10000 });
    await waitFor(client, (v) => v.feed.length === 1, "first feedback");

    const t0 = Date.now();
    client.sendOperatorEvent("force_advance", 2, 10000);
    await waitFor(
      client,
      (v) => v.pendingEvents.length === 0 && v.currentStep === 2,
      "force_advance ack",
    );
    const roundTrip = Date.now() - t0;
    expect(roundTrip).toBeLessThan(SEGMENT_CADENCE_MS);
    expect(client.view.steps[2].status).toBe("active");

    // the next feedback reflects the server-side pin too
    client.sendSegment({ seq_no: 1, t_start_ms: 10000, t_end_ms: 20000 });
    await waitFor(client, (v) => v.feed.length === 2, "second feedback");
    expect(client.view.feed[1].current_step).toBe(2);

    client.endSession(20000);
    await waitFor(client, (v) => v.finished, "session summary");
    expect(client.view.summary).not.toBeNull();
    transport.close();

    // the pin reached the server's append-only session log
    const logText = fs.readFileSync(path.join(logDir, "live-1.ndjson"), "utf8");
    const records = logText
      .split("\n")
      .filter((l) => l.trim())
      .slice(1)
      .map((l) => JSON.parse(l));
    const pins = records.filter((r) => r.kind === "pin");
    expect(pins).toHaveLength(1);
    expect(pins[0].record).toEqual({ step: 2 });
  }, 30000);
});
