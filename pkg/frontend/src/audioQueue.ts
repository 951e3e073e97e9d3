// Low-latency playback queue for 20 ms PCM frames.
//
// The queue core is plain data so it can be tested headless; the browser
// half wires it to an AudioContext. flush() empties atomically with
// respect to the pull callback, so barge-in silences within one quantum.

import { FRAME_BYTES, FRAME_SAMPLES, SAMPLE_RATE } from "./protocol.js";

export class FrameQueue {
  private frames: Float32Array[] = [];
  private offset = 0; // samples consumed from frames[0]
  dropped = 0;
  rejected = 0;

  constructor(private maxFrames = 200) {}

  get length(): number {
    return this.frames.length;
  }

  get queuedSamples(): number {
    let total = 0;
    for (const frame of this.frames) total += frame.length;
    return total - this.offset;
  }

  enqueue(data: ArrayBuffer | Uint8Array): boolean {
    const bytes = data instanceof Uint8Array ? data : new Uint8Array(data);
    if (bytes.byteLength !== FRAME_BYTES) {
      this.rejected += 1;
      return false;
    }
    if (this.frames.length >= this.maxFrames) {
      this.frames.shift(); // drop oldest; keep latency bounded
      this.offset = 0;
      this.dropped += 1;
    }
    const pcm = new Int16Array(bytes.buffer, bytes.byteOffset, FRAME_SAMPLES);
    const floats = new Float32Array(FRAME_SAMPLES);
    for (let i = 0; i < FRAME_SAMPLES; i++) floats[i] = pcm[i] / 32768;
    this.frames.push(floats);
    return true;
  }

  // Fill `out` from the queue; zero-pads when starved. This is the audio
  // callback's pull path.
  pull(out: Float32Array): number {
    let written = 0;
    while (written < out.length && this.frames.length > 0) {
      const head = this.frames[0];
      const available = head.length - this.offset;
      const need = out.length - written;
      const take = Math.min(available, need);
      out.set(head.subarray(this.offset, this.offset + take), written);
      written += take;
      this.offset += take;
      if (this.offset >= head.length) {
        this.frames.shift();
        this.offset = 0;
      }
    }
    out.fill(0, written);
    return written;
  }

  flush(): void {
    this.frames = [];
    this.offset = 0;
  }
}

export class Player {
  readonly queue = new FrameQueue();
  private context: AudioContext | null = null;
  private node: ScriptProcessorNode | null = null;

  async start(): Promise<void> {
    if (this.context) return;
    this.context = new AudioContext({ sampleRate: SAMPLE_RATE });
    // ScriptProcessor keeps the pull path synchronous with flush(); a worklet
    // drop-in would post frames over a port instead.
    this.node = this.context.createScriptProcessor(1024, 0, 1);
    this.node.onaudioprocess = (event) => {
      this.queue.pull(event.outputBuffer.getChannelData(0));
    };
    this.node.connect(this.context.destination);
    await this.context.resume();
  }

  enqueue(data: ArrayBuffer): void {
    this.queue.enqueue(data);
  }

  flush(): void {
    this.queue.flush();
  }

  async close(): Promise<void> {
    this.node?.disconnect();
    this.node = null;
    await this.context?.close();
    this.context = null;
  }
}
