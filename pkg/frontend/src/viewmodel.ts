// Pure view model: the console view is a fold over the envelope history.
// No DOM, no sockets — applyEnvelope(view, env) returns a new view, so
// replaying a recorded session log reproduces the identical final view.

import {
  Deviation,
  Envelope,
  FeedbackPayload,
  ProtocolStepInfo,
  SCHEMA_VERSION,
  SessionSummary,
  Severity,
} from "./types.js";

export type StepStatus = "pending" | "active" | "done" | "skipped";

export interface StepView {
  index: number;
  id: string;
  name: string;
  status: StepStatus;
}

export interface Banner {
  deviation: Deviation;
  blocking: boolean;
  acknowledged: boolean;
}

export type ConnectionState =
  | "idle"
  | "connecting"
  | "connected"
  | "closed"
  | "error";

export interface PendingEvent {
  kind: string;
  target: number | null;
  t_ms: number;
  text?: string;
  state: "unsent" | "awaiting_ack";
}

export interface ConsoleSessionView {
  connection: ConnectionState;
  connectionError: string;
  sessionId: string;
  steps: StepView[];
  currentStep: number | "off_protocol" | null;
  guidance: string;
  feed: FeedbackPayload[];
  banners: Banner[];
  summary: SessionSummary | null;
  pendingEvents: PendingEvent[];
  pinnedStep: number | null;
  finished: boolean;
}

export function initialView(): ConsoleSessionView {
  return {
    connection: "idle",
    connectionError: "",
    sessionId: "",
    steps: [],
    currentStep: null,
    guidance: "",
    feed: [],
    banners: [],
    summary: null,
    pendingEvents: [],
    pinnedStep: null,
    finished: false,
  };
}

const SEVERITY_RANK: Record<Severity, number> = {
  critical: 0,
  warning: 1,
  info: 2,
};

function sortBanners(banners: Banner[]): Banner[] {
  return [...banners].sort((a, b) => {
    const s =
      SEVERITY_RANK[a.deviation.severity] - SEVERITY_RANK[b.deviation.severity];
    if (s !== 0) return s;
    if (a.deviation.t_start_ms !== b.deviation.t_start_ms) {
      return a.deviation.t_start_ms - b.deviation.t_start_ms;
    }
    return a.deviation.id - b.deviation.id;
  });
}

/** True while any critical deviation is still unacknowledged. */
export function isBlocked(view: ConsoleSessionView): boolean {
  return view.banners.some((b) => b.blocking && !b.acknowledged);
}

function skippedRefs(view: ConsoleSessionView): Set<number> {
  const refs = new Set<number>();
  for (const b of view.banners) {
    if (b.deviation.kind === "SkippedStep" && b.deviation.step_ref !== null) {
      refs.add(b.deviation.step_ref);
    }
  }
  return refs;
}

function liveStatuses(view: ConsoleSessionView): StepView[] {
  const cur = view.currentStep;
  const skipped = skippedRefs(view);
  return view.steps.map((s) => {
    let status: StepStatus = "pending";
    if (cur === "off_protocol" || cur === null) {
      status = "pending";
    } else if (s.index === cur) {
      status = "active";
    } else if (s.index < cur) {
      status = skipped.has(s.index) ? "skipped" : "done";
    }
    return { ...s, status };
  });
}

/** Final statuses from the summary segmentation: every visited step is done,
 * unvisited steps below the furthest visited one are skipped. */
export function summaryStatuses(
  steps: ProtocolStepInfo[],
  summary: SessionSummary,
): StepView[] {
  const visited = new Set<number>();
  for (const seg of summary.segmentation) {
    if (seg.state !== "off_protocol") visited.add(seg.state);
  }
  const maxVisited = visited.size ? Math.max(...visited) : -1;
  return steps.map((s) => {
    let status: StepStatus = "pending";
    if (visited.has(s.index)) status = "done";
    else if (s.index < maxVisited) status = "skipped";
    return { index: s.index, id: s.id, name: s.name, status };
  });
}

function withDeviations(
  view: ConsoleSessionView,
  devs: Deviation[],
): ConsoleSessionView {
  if (!devs.length) return view;
  const known = new Set(view.banners.map((b) => b.deviation.id));
  const added = devs
    .filter((d) => !known.has(d.id))
    .map((d) => ({
      deviation: d,
      blocking: d.severity === "critical",
      acknowledged: false,
    }));
  return { ...view, banners: sortBanners([...view.banners, ...added]) };
}

function applyFeedback(
  view: ConsoleSessionView,
  fb: FeedbackPayload,
): ConsoleSessionView {
  let next: ConsoleSessionView = {
    ...view,
    feed: [...view.feed, fb],
    guidance: fb.guidance,
    currentStep: fb.current_step,
  };
  next = withDeviations(next, fb.deviations);
  if (fb.session_summary) {
    next = withDeviations(next, fb.session_summary.deviations);
    next = {
      ...next,
      summary: fb.session_summary,
      finished: true,
      currentStep: null,
      steps: summaryStatuses(next.steps, fb.session_summary),
    };
  } else {
    // A pin keeps the active marker where the ack put it until the
    // server's own reported step catches up (or the session ends).
    if (next.pinnedStep !== null) {
      if (fb.current_step === next.pinnedStep) {
        next = { ...next, pinnedStep: null };
      } else {
        next = { ...next, currentStep: next.pinnedStep };
      }
    }
    next = { ...next, steps: liveStatuses(next) };
  }
  return next;
}

function applyAck(view: ConsoleSessionView, env: Envelope): ConsoleSessionView {
  const p = env.payload;
  if (p.session === "started") {
    const steps: ProtocolStepInfo[] = p.steps ?? [];
    const next: ConsoleSessionView = {
      ...view,
      sessionId: env.session_id,
      steps: steps.map((s) => ({ ...s, status: "pending" as StepStatus })),
      currentStep: 0,
      pinnedStep: null,
    };
    return { ...next, steps: liveStatuses(next) };
  }
  if (p.acked === "operator_event") {
    const idx = view.pendingEvents.findIndex(
      (e) =>
        e.state === "awaiting_ack" &&
        e.kind === p.kind &&
        (e.target ?? null) === (p.target ?? null),
    );
    let next: ConsoleSessionView =
      idx >= 0
        ? {
            ...view,
            pendingEvents: view.pendingEvents.filter((_, i) => i !== idx),
          }
        : view;
    if (p.kind === "acknowledge_deviation") {
      next = {
        ...next,
        banners: next.banners.map((b) =>
          b.deviation.id === p.target ? { ...b, acknowledged: true } : b,
        ),
      };
    }
    if (p.kind === "force_advance" && typeof p.target === "number") {
      // The active marker moves only now, on the server's acknowledgment.
      next = { ...next, pinnedStep: p.target, currentStep: p.target };
      next = { ...next, steps: liveStatuses(next) };
    }
    return next;
  }
  return view;
}

export function applyEnvelope(
  view: ConsoleSessionView,
  env: Envelope,
): ConsoleSessionView {
  if (env.schema_version !== SCHEMA_VERSION) {
    return {
      ...view,
      connection: "error",
      connectionError: `schema_version mismatch: got "${env.schema_version}", speak "${SCHEMA_VERSION}"`,
    };
  }
  switch (env.type) {
    case "ack":
      return applyAck(view, env);
    case "feedback":
      return applyFeedback(view, env.payload as FeedbackPayload);
    case "error":
      return {
        ...view,
        connection: "error",
        connectionError: String(env.payload.message ?? "server error"),
      };
    default:
      return view;
  }
}

export function applyAll(
  view: ConsoleSessionView,
  envs: Envelope[],
): ConsoleSessionView {
  return envs.reduce(applyEnvelope, view);
}
