// Wire-protocol types shared with the session server (schema_version "1").

export const SCHEMA_VERSION = "1";

export type EnvelopeType =
  | "hello"
  | "session_start"
  | "segment"
  | "observations"
  | "feedback"
  | "operator_event"
  | "error"
  | "session_end"
  | "ack";

export interface Envelope {
  type: EnvelopeType;
  session_id: string;
  seq: number;
  schema_version: string;
  payload: Record<string, any>;
}

export type Severity = "info" | "warning" | "critical";

export interface Deviation {
  id: number;
  kind: string;
  severity: Severity;
  t_start_ms: number;
  t_end_ms: number;
  step_ref: number | null;
  message: string;
  suggested_correction: string;
}

export interface SegmentationEntry {
  state: number | "off_protocol";
  step_id?: string;
  t_start_ms: number;
  t_end_ms: number;
}

export interface SessionSummary {
  segmentation: SegmentationEntry[];
  deviations: Deviation[];
  deviation_counts: Record<string, number>;
}

export interface FeedbackPayload {
  t_ms: number;
  current_step: number | "off_protocol";
  step_name: string;
  guidance: string;
  deviations: Deviation[];
  session_summary: SessionSummary | null;
}

export type OperatorEventKind =
  | "acknowledge_deviation"
  | "force_advance"
  | "pause"
  | "resume"
  | "note";

export interface ProtocolStepInfo {
  index: number;
  id: string;
  name: string;
}

export function parseEnvelope(line: string): Envelope | null {
  try {
    const obj = JSON.parse(line);
    if (typeof obj !== "object" || obj === null || typeof obj.type !== "string") {
      return null;
    }
    return obj as Envelope;
  } catch {
    return null;
  }
}
