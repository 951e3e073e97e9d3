// Microphone capture with local energy-onset detection.
//
// The onset detector mirrors the server's VAD: an interrupt fires on the
// third consecutive loud capture callback, so barge-in latency is bounded by
// three audio quanta without waiting for any server round trip.

import { FRAME_SAMPLES } from "./protocol.js";

export class OnsetDetector {
  private consecutive = 0;
  private inSpeech = false;

  constructor(
    private threshold = 0.02,
    private triggerFrames = 3,
    private hangoverFrames = 10,
    private hangover = 0,
  ) {}

  // Returns true exactly once per utterance onset.
  step(samples: Float32Array): boolean {
    let energy = 0;
    for (let i = 0; i < samples.length; i++) energy += samples[i] * samples[i];
    const rms = Math.sqrt(energy / Math.max(samples.length, 1));

    if (rms >= this.threshold) {
      this.hangover = this.hangoverFrames;
      if (this.inSpeech) return false;
      this.consecutive += 1;
      if (this.consecutive >= this.triggerFrames) {
        this.inSpeech = true;
        return true;
      }
      return false;
    }
    this.consecutive = 0;
    if (this.inSpeech && this.hangover > 0) {
      this.hangover -= 1;
    } else {
      this.inSpeech = false;
    }
    return false;
  }

  reset(): void {
    this.consecutive = 0;
    this.inSpeech = false;
    this.hangover = 0;
  }
}

export function floatTo16BitFrames(samples: Float32Array): Uint8Array[] {
  // Slice capture buffers into exact 20 ms transport frames; a remainder
  // shorter than one frame is dropped (next callback supplies it again).
  const frames: Uint8Array[] = [];
  for (let start = 0; start + FRAME_SAMPLES <= samples.length; start += FRAME_SAMPLES) {
    const out = new Int16Array(FRAME_SAMPLES);
    for (let i = 0; i < FRAME_SAMPLES; i++) {
      const v = Math.max(-1, Math.min(1, samples[start + i]));
      out[i] = Math.round(v * 32767);
    }
    frames.push(new Uint8Array(out.buffer));
  }
  return frames;
}

export class Microphone {
  private context: AudioContext | null = null;
  private stream: MediaStream | null = null;
  readonly detector = new OnsetDetector();

  constructor(
    private onOnset: () => void,
    private onFrames: ((frames: Uint8Array[]) => void) | null = null,
  ) {}

  async start(): Promise<void> {
    if (this.context) return;
    this.stream = await navigator.mediaDevices.getUserMedia({ audio: true });
    this.context = new AudioContext({ sampleRate: 16000 });
    const source = this.context.createMediaStreamSource(this.stream);
    const node = this.context.createScriptProcessor(1024, 1, 1);
    node.onaudioprocess = (event) => {
      const samples = event.inputBuffer.getChannelData(0);
      if (this.detector.step(samples)) this.onOnset();
      if (this.onFrames) this.onFrames(floatTo16BitFrames(samples));
    };
    source.connect(node);
    node.connect(this.context.destination);
  }

  async stop(): Promise<void> {
    this.stream?.getTracks().forEach((track) => track.stop());
    await this.context?.close();
    this.context = null;
    this.stream = null;
    this.detector.reset();
  }
}
