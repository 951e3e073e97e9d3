import { describe, expect, it } from "vitest";

import { OnsetDetector, floatTo16BitFrames } from "../src/capture.js";
import { FRAME_BYTES, FRAME_SAMPLES } from "../src/protocol.js";

function buffer(rms: number, length = 1024): Float32Array {
  // A square-ish signal whose RMS equals the requested value.
  const out = new Float32Array(length);
  for (let i = 0; i < length; i++) out[i] = i % 2 === 0 ? rms : -rms;
  return out;
}

describe("OnsetDetector", () => {
  it("fires exactly on the third consecutive loud callback", () => {
    const detector = new OnsetDetector();
    const loud = buffer(0.1);
    expect(detector.step(loud)).toBe(false);
    expect(detector.step(loud)).toBe(false);
    expect(detector.step(loud)).toBe(true);
    expect(detector.step(loud)).toBe(false); // already in speech
  });

  it("silence resets the run-up", () => {
    const detector = new OnsetDetector();
    const loud = buffer(0.1);
    const quiet = buffer(0.001);
    detector.step(loud);
    detector.step(loud);
    detector.step(quiet);
    expect(detector.step(loud)).toBe(false);
    expect(detector.step(loud)).toBe(false);
    expect(detector.step(loud)).toBe(true);
  });

  it("re-arms after hangover expires", () => {
    const detector = new OnsetDetector(0.02, 3, 2);
    const loud = buffer(0.1);
    const quiet = buffer(0.001);
    for (let i = 0; i < 3; i++) detector.step(loud);
    for (let i = 0; i < 3; i++) detector.step(quiet); // beyond hangover
    expect(detector.step(loud)).toBe(false);
    expect(detector.step(loud)).toBe(false);
    expect(detector.step(loud)).toBe(true);
  });
});

describe("floatTo16BitFrames", () => {
  it("slices capture buffers into exact transport frames", () => {
    const frames = floatTo16BitFrames(new Float32Array(FRAME_SAMPLES * 2 + 17));
    expect(frames).toHaveLength(2);
    for (const frame of frames) expect(frame.byteLength).toBe(FRAME_BYTES);
  });

  it("clamps out-of-range samples", () => {
    const samples = new Float32Array(FRAME_SAMPLES).fill(2.0);
    const [frame] = floatTo16BitFrames(samples);
    const pcm = new Int16Array(frame.buffer);
    expect(pcm[0]).toBe(32767);
  });
});
