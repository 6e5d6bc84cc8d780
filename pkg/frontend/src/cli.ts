#!/usr/bin/env node
// bench-console entry point.
//
//   node dist/cli.js replay <session.ndjson>
//       Fold a recorded session log's outbound envelopes into the view
//       model and print the final console view.
//
//   node dist/cli.js live <host:port> <session-id> <protocol-id> <trace-ref>
//       [--segments N] [--segment-ms M]
//       Connect to a running session server, drive N trace segments at
//       the given cadence, and render the view after every update.

import * as fs from "node:fs";
import { ConsoleClient } from "./client.js";
import { connectTcp } from "./tcp.js";
import { renderView } from "./render.js";
import { outboundEnvelopes } from "./logreplay.js";
import { applyAll, initialView } from "./viewmodel.js";

function usage(): never {
  console.error(
    "usage: cli.js replay <session.ndjson>\n" +
      "       cli.js live <host:port> <session-id> <protocol-id> <trace-ref>" +
      " [--segments N] [--segment-ms M]",
  );
  process.exit(2);
}

function flag(args: string[], name: string, dflt: number): number {
  const i = args.indexOf(name);
  return i >= 0 && i + 1 < args.length ? Number(args[i + 1]) : dflt;
}

async function live(args: string[]): Promise<void> {
  const [addr, sessionId, protocolId, traceRef] = args;
  if (!addr || !sessionId || !protocolId || !traceRef) usage();
  const [host, port] = addr.split(":");
  const segments = flag(args, "--segments", 10);
  const segmentMs = flag(args, "--segment-ms", 5000);

  const client = new ConsoleClient(sessionId);
  client.onChange((view) => {
    console.log("\n" + renderView(view));
  });
  const transport = await connectTcp(client, host, Number(port));
  client.startSession(protocolId, traceRef);
  for (let n = 0; n < segments; n++) {
    client.sendSegment({
      seq_no: n,
      t_start_ms: n * segmentMs,
      t_end_ms: (n + 1) * segmentMs,
    });
    await new Promise((r) => setTimeout(r, 50));
  }
  client.endSession(segments * segmentMs);
  await new Promise((r) => setTimeout(r, 200));
  transport.close();
}

function replay(args: string[]): void {
  const path = args[0];
  if (!path) usage();
  const text = fs.readFileSync(path, "utf8");
  const view = applyAll(initialView(), outboundEnvelopes(text));
  console.log(renderView(view));
}

const [mode, ...rest] = process.argv.slice(2);
if (mode === "replay") {
  replay(rest);
} else if (mode === "live") {
  live(rest).catch((e) => {
    console.error(String(e));
    process.exit(1);
  });
} else {
  usage();
}
