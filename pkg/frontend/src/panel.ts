// DOM bindings: planning panel, transcript, state badge, TTFA readout.

import type { ClientState, PlanningRow } from "./state.js";

export function renderPlanningRows(rows: PlanningRow[], finished: boolean): string {
  const items = rows
    .map(
      (row) => `
      <li class="row kind-${row.kind}" data-seq="${row.seq}">
        <span class="kind">${row.kind}</span>
        <span class="text">${escapeHtml(row.text)}</span>
        ${row.narration ? `<span class="narration">${escapeHtml(row.narration)}</span>` : ""}
      </li>`,
    )
    .join("");
  const badge = finished ? '<li class="done">finished</li>' : "";
  return items + badge;
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;");
}

export class PanelBinding {
  constructor(
    private state: ClientState,
    private panel: HTMLElement,
    private transcript: HTMLElement,
    private badge: HTMLElement,
    private ttfa: HTMLElement,
    private bargeButton: HTMLButtonElement,
  ) {
    state.onChange(() => this.sync());
    this.sync();
  }

  sync(): void {
    this.panel.innerHTML = renderPlanningRows(this.state.planning, this.state.finished);
    const lines = [...this.state.transcript];
    if (this.state.partialTranscript) lines.push(`… ${this.state.partialTranscript}`);
    this.transcript.textContent = lines.join("\n");
    this.badge.textContent = `${this.state.connection} / ${this.state.sessionState}`;
    this.badge.dataset.state = this.state.sessionState;
    this.ttfa.textContent =
      this.state.ttfaMs === null ? "" : `first audio in ${this.state.ttfaMs.toFixed(1)} ms`;
    this.bargeButton.disabled = !this.state.canBargeIn();
    if (this.state.errors.length) {
      this.badge.classList.add("error");
      this.badge.title = this.state.errors[this.state.errors.length - 1];
    }
  }
}
