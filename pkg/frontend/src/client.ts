// Websocket session client: typed control messages out, state + audio in.
//
// The interrupt path never waits on rendering: local playback flushes
// immediately on barge-in, before the server confirms with state=listening.

import { parseServerMessage, type ClientMessage } from "./protocol.js";
import { ClientState } from "./state.js";

export interface AudioSink {
  enqueue(data: ArrayBuffer): void;
  flush(): void;
}

export class SessionClient {
  readonly state = new ClientState();
  private socket: WebSocket | null = null;
  private epoch = performance.now();

  constructor(private audio: AudioSink | null = null) {}

  connect(url: string): Promise<void> {
    this.state.setConnection("connecting");
    return new Promise((resolve, reject) => {
      const socket = new WebSocket(url);
      socket.binaryType = "arraybuffer";
      socket.onopen = () => {
        this.socket = socket;
        this.state.setConnection("connected");
        resolve();
      };
      socket.onclose = () => {
        this.socket = null;
        this.state.setConnection("disconnected");
      };
      socket.onerror = () => {
        if (this.socket === null) reject(new Error(`connect failed: ${url}`));
        this.state.setConnection("disconnected");
      };
      socket.onmessage = (event) => this.onMessage(event.data);
    });
  }

  private onMessage(data: unknown): void {
    if (typeof data === "string") {
      const msg = parseServerMessage(data);
      if (msg) this.state.apply(msg);
      return;
    }
    if (data instanceof ArrayBuffer && this.audio) {
      this.audio.enqueue(data);
    }
  }

  send(msg: ClientMessage): void {
    if (!this.socket || this.socket.readyState !== WebSocket.OPEN) {
      this.state.errors.push("disconnected: message not sent");
      return;
    }
    this.socket.send(JSON.stringify(msg));
  }

  sendFrame(frame: Uint8Array): void {
    if (this.socket && this.socket.readyState === WebSocket.OPEN) {
      this.socket.send(frame);
    }
  }

  startTask(scenario: "math" | "travel" | "research", query: string): void {
    this.state.reset();
    this.send({ type: "start_task", scenario, query });
  }

  sendUserText(text: string): void {
    this.send({ type: "user_text", text });
  }

  // Barge in from the button or local speech onset. Local audio stops now;
  // the UI switches to listening only when the server confirms.
  bargeIn(): boolean {
    if (!this.state.canBargeIn()) return false;
    this.audio?.flush();
    this.send({ type: "interrupt", client_t_ms: performance.now() - this.epoch });
    return true;
  }

  close(): void {
    this.socket?.close();
    this.socket = null;
  }
}
