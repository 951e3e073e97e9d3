// Browser entry point: wires the session client, audio, and panel together.

import { Player } from "./audioQueue.js";
import { Microphone } from "./capture.js";
import { SessionClient } from "./client.js";
import { PanelBinding } from "./panel.js";

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const player = new Player();
  const client = new SessionClient(player);
  new PanelBinding(
    client.state,
    element("planning"),
    element("transcript"),
    element("badge"),
    element("ttfa"),
    element<HTMLButtonElement>("barge"),
  );

  const url = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
  await client.connect(url);

  element<HTMLButtonElement>("start").onclick = async () => {
    await player.start();
    const scenario = element<HTMLSelectElement>("scenario").value as
      | "math"
      | "travel"
      | "research";
    const query = element<HTMLInputElement>("query").value || "run the task";
    client.startTask(scenario, query);
  };

  element<HTMLButtonElement>("barge").onclick = () => client.bargeIn();

  const textInput = element<HTMLInputElement>("say");
  element<HTMLButtonElement>("send").onclick = () => {
    if (textInput.value.trim()) {
      client.sendUserText(textInput.value.trim());
      textInput.value = "";
    }
  };

  // Always-on microphone: local onset both barges in and streams frames so
  // the server-side detector can act as a fallback.
  const micToggle = element<HTMLInputElement>("mic");
  const microphone = new Microphone(
    () => client.bargeIn(),
    (frames) => frames.forEach((frame) => client.sendFrame(frame)),
  );
  micToggle.onchange = async () => {
    if (micToggle.checked) {
      try {
        await microphone.start();
      } catch (err) {
        client.state.errors.push(`microphone: ${String(err)}`);
        micToggle.checked = false;
      }
    } else {
      await microphone.stop();
    }
  };
}

boot().catch((err) => {
  const badge = document.getElementById("badge");
  if (badge) {
    badge.textContent = `connection failed: ${String(err)}`;
    badge.classList.add("error");
  }
});
