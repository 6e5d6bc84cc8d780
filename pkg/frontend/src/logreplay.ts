// Read a recorded session log (NDJSON: one header line, then indexed
// records) and pull out the outbound envelopes, in order, for folding
// into the view model.

import { Envelope } from "./types.js";

export interface SessionLogFile {
  header: Record<string, any>;
  records: Array<{ idx: number; kind: string; t_ms: number; record: any }>;
}

export function parseSessionLog(text: string): SessionLogFile {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  if (!lines.length) throw new Error("empty session log");
  const header = JSON.parse(lines[0]).header;
  if (typeof header !== "object" || header === null) {
    throw new Error("malformed session log header");
  }
  const records = lines.slice(1).map((l) => JSON.parse(l));
  return { header, records };
}

export function outboundEnvelopes(text: string): Envelope[] {
  const log = parseSessionLog(text);
  return log.records
    .filter((r) => r.kind === "out")
    .map((r) => r.record as Envelope);
}
