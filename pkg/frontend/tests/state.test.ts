import { describe, expect, it } from "vitest";

import { parseServerMessage } from "../src/protocol.js";
import { ClientState } from "../src/state.js";

function reasoningEvent(seq: number, kind: "thinking" | "content" | "answer" = "thinking") {
  return { type: "reasoning_event", kind, text: `step ${seq}`, seq, t_ms: seq * 10 } as const;
}

describe("ClientState", () => {
  it("appends planning rows in seq order", () => {
    const state = new ClientState();
    for (const seq of [0, 1, 2]) state.apply(reasoningEvent(seq));
    expect(state.planning.map((r) => r.seq)).toEqual([0, 1, 2]);
  });

  it("inserts out-of-order rows at their seq position", () => {
    const state = new ClientState();
    state.apply(reasoningEvent(0));
    state.apply(reasoningEvent(2));
    state.apply(reasoningEvent(1));
    expect(state.planning.map((r) => r.seq)).toEqual([0, 1, 2]);
    expect(state.outOfOrder).toBe(1);
  });

  it("row count always equals received event count", () => {
    const state = new ClientState();
    const seqs = [3, 0, 2, 1, 4];
    seqs.forEach((seq) => state.apply(reasoningEvent(seq)));
    expect(state.planning).toHaveLength(seqs.length);
  });

  it("pairs narration with its source row", () => {
    const state = new ClientState();
    state.apply(reasoningEvent(0));
    state.apply({ type: "narration_text", text: "working on step 0", seq: 0 });
    expect(state.planning[0].narration).toBe("working on step 0");
  });

  it("session state follows only server state messages", () => {
    const state = new ClientState();
    state.apply({ type: "state", value: "processing" });
    expect(state.sessionState).toBe("processing");
    state.apply(reasoningEvent(0));
    expect(state.sessionState).toBe("processing");
    state.apply({ type: "state", value: "speaking" });
    expect(state.sessionState).toBe("speaking");
  });

  it("marks the panel finished on complete", () => {
    const state = new ClientState();
    state.apply({ type: "complete" });
    expect(state.finished).toBe(true);
  });

  it("guards barge-in by connection and session state", () => {
    const state = new ClientState();
    expect(state.canBargeIn()).toBe(false);
    state.setConnection("connected");
    expect(state.canBargeIn()).toBe(false); // still listening
    state.apply({ type: "state", value: "speaking" });
    expect(state.canBargeIn()).toBe(true);
    state.apply({ type: "state", value: "listening" });
    expect(state.canBargeIn()).toBe(false);
  });

  it("collects transcript lines and ttfa", () => {
    const state = new ClientState();
    state.apply({ type: "transcript_partial", text: "hel" });
    expect(state.partialTranscript).toBe("hel");
    state.apply({ type: "transcript_final", text: "hello" });
    expect(state.partialTranscript).toBe("");
    expect(state.transcript).toEqual(["you: hello"]);
    state.apply({ type: "ttfa_report", ms: 31.5 });
    expect(state.ttfaMs).toBe(31.5);
  });
});

describe("parseServerMessage", () => {
  it("accepts known types", () => {
    expect(parseServerMessage('{"type":"state","value":"listening"}')).toEqual({
      type: "state",
      value: "listening",
    });
  });

  it("rejects unknown types and junk", () => {
    expect(parseServerMessage('{"type":"reboot"}')).toBeNull();
    expect(parseServerMessage("not json")).toBeNull();
    expect(parseServerMessage("42")).toBeNull();
  });
});
