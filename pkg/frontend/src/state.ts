// Client-side session state. The server's `state` messages are the single
// source of truth for the session phase; everything here is a projection of
// received messages, kept ordered for the planning panel.

import type { ServerMessage, SessionStateValue } from "./protocol.js";

export interface PlanningRow {
  seq: number;
  kind: "thinking" | "content" | "answer";
  text: string;
  narration: string | null;
}

export type Connection = "disconnected" | "connecting" | "connected";

export class ClientState {
  connection: Connection = "disconnected";
  sessionState: SessionStateValue = "listening";
  planning: PlanningRow[] = [];
  transcript: string[] = [];
  partialTranscript = "";
  ttfaMs: number | null = null;
  finished = false;
  errors: string[] = [];
  outOfOrder = 0;

  private listeners: (() => void)[] = [];

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  setConnection(value: Connection): void {
    this.connection = value;
    this.emit();
  }

  reset(): void {
    this.planning = [];
    this.transcript = [];
    this.partialTranscript = "";
    this.ttfaMs = null;
    this.finished = false;
    this.emit();
  }

  apply(msg: ServerMessage): void {
    switch (msg.type) {
      case "state":
        this.sessionState = msg.value;
        break;
      case "reasoning_event": {
        const row: PlanningRow = {
          seq: msg.seq,
          kind: msg.kind,
          text: msg.text,
          narration: null,
        };
        // Rows stay ordered by seq even if frames arrive shuffled.
        const at = this.planning.findIndex((r) => r.seq > msg.seq);
        if (at === -1) {
          this.planning.push(row);
        } else {
          this.outOfOrder += 1;
          this.planning.splice(at, 0, row);
        }
        break;
      }
      case "narration_text": {
        if (msg.seq !== null) {
          const row = this.planning.find((r) => r.seq === msg.seq);
          if (row) {
            row.narration = msg.text;
            break;
          }
        }
        this.transcript.push(`agent: ${msg.text}`);
        break;
      }
      case "transcript_partial":
        this.partialTranscript = msg.text;
        break;
      case "transcript_final":
        this.partialTranscript = "";
        this.transcript.push(`you: ${msg.text}`);
        break;
      case "ttfa_report":
        this.ttfaMs = msg.ms;
        break;
      case "complete":
        this.finished = true;
        break;
      case "error":
        this.errors.push(`${msg.code}: ${msg.detail}`);
        break;
    }
    this.emit();
  }

  canBargeIn(): boolean {
    return (
      this.connection === "connected" &&
      (this.sessionState === "speaking" || this.sessionState === "processing")
    );
  }
}
