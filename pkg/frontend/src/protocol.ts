// Control message schema shared with the server's websocket endpoint.
// Text frames carry these JSON objects; binary frames carry 20 ms PCM.

export type SessionStateValue = "listening" | "processing" | "speaking";

export interface StateMsg {
  type: "state";
  value: SessionStateValue;
}

export interface ReasoningEventMsg {
  type: "reasoning_event";
  kind: "thinking" | "content" | "answer";
  text: string;
  seq: number;
  t_ms: number;
}

export interface NarrationTextMsg {
  type: "narration_text";
  text: string;
  seq: number | null;
}

export interface TranscriptMsg {
  type: "transcript_partial" | "transcript_final";
  text: string;
}

export interface TtfaReportMsg {
  type: "ttfa_report";
  ms: number;
}

export interface CompleteMsg {
  type: "complete";
}

export interface ErrorMsg {
  type: "error";
  code: string;
  detail: string;
}

export type ServerMessage =
  | StateMsg
  | ReasoningEventMsg
  | NarrationTextMsg
  | TranscriptMsg
  | TtfaReportMsg
  | CompleteMsg
  | ErrorMsg;

const SERVER_TYPES = new Set([
  "state",
  "reasoning_event",
  "narration_text",
  "transcript_partial",
  "transcript_final",
  "ttfa_report",
  "complete",
  "error",
]);

export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const type = (data as { type?: unknown }).type;
  if (typeof type !== "string" || !SERVER_TYPES.has(type)) return null;
  return data as ServerMessage;
}

export interface StartTask {
  type: "start_task";
  scenario: "math" | "travel" | "research";
  query: string;
}

export interface UserText {
  type: "user_text";
  text: string;
}

export interface Interrupt {
  type: "interrupt";
  client_t_ms: number;
}

export interface ConfigUpdate {
  type: "config_update";
  anchors?: [number, number][];
  style?: "concise" | "detailed";
}

export type ClientMessage = StartTask | UserText | Interrupt | ConfigUpdate;

export const SAMPLE_RATE = 16000;
export const FRAME_SAMPLES = SAMPLE_RATE / 50; // 20 ms
export const FRAME_BYTES = FRAME_SAMPLES * 2; // 16-bit mono
