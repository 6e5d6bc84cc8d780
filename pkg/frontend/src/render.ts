// Plain-text rendering of a ConsoleSessionView for the terminal console.

import { ConsoleSessionView, isBlocked } from "./viewmodel.js";

const MARK: Record<string, string> = {
  pending: " ",
  active: ">",
  done: "x",
  skipped: "-",
};

export function renderView(view: ConsoleSessionView): string {
  const lines: string[] = [];
  lines.push(
    `connection: ${view.connection}` +
      (view.connectionError ? ` (${view.connectionError})` : ""),
  );
  if (view.sessionId) lines.push(`session: ${view.sessionId}`);
  if (view.currentStep === "off_protocol") {
    lines.push("!! OFF PROTOCOL");
  }
  for (const s of view.steps) {
    lines.push(` [${MARK[s.status]}] ${s.index}. ${s.name} (${s.status})`);
  }
  if (view.guidance) lines.push(`guidance: ${view.guidance}`);
  const blocked = isBlocked(view);
  for (const b of view.banners) {
    const flag = b.blocking && !b.acknowledged ? "BLOCKING" : b.acknowledged ? "acked" : b.deviation.severity;
    lines.push(
      `  !! [${flag}] ${b.deviation.kind}: ${b.deviation.message}` +
        (b.deviation.suggested_correction
          ? ` -> ${b.deviation.suggested_correction}`
          : ""),
    );
  }
  if (blocked) lines.push("** step display blocked until acknowledged **");
  for (const e of view.pendingEvents) {
    lines.push(`  .. operator_event ${e.kind} [${e.state}]`);
  }
  if (view.summary) {
    lines.push("timeline:");
    for (const seg of view.summary.segmentation) {
      const label =
        seg.state === "off_protocol" ? "off_protocol" : `step ${seg.state} (${seg.step_id})`;
      lines.push(`  ${seg.t_start_ms}..${seg.t_end_ms} ms  ${label}`);
    }
    const counts = Object.entries(view.summary.deviation_counts)
      .map(([k, v]) => `${k}=${v}`)
      .join(", ");
    lines.push(`deviations: ${counts || "none"}`);
  }
  return lines.join("\n");
}
