// Minimal DOM rendering: one pass over the store per change notification.

import { SessionStore, QueryCard } from "./store.js";

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function fmtSpan(span: [number, number]): string {
  return `${span[0]}s–${span[1]}s`;
}

function stateChip(card: QueryCard): string {
  const labels: Record<string, string> = {
    pending: "Pending",
    answered: "Answered",
    forced: "Forced",
  };
  return `<span class="chip chip-${card.state}">${labels[card.state]}</span>`;
}

function renderCard(store: SessionStore, card: QueryCard): string {
  const parts: string[] = [`<div class="card card-${card.state}">`];
  parts.push(`<div class="card-head">${stateChip(card)} <b>${esc(card.text)}</b></div>`);
  if (card.error) {
    parts.push(`<div class="card-error">rejected: ${esc(card.error)} (edit and resubmit)</div>`);
  }
  if (card.submittedAt !== null) {
    parts.push(`<div class="card-meta">submitted at t=${card.submittedAt}s</div>`);
  }
  const defers = store.deferCount(card.queryId);
  if (card.state === "pending" && defers > 0) {
    const rationale = store.latestRationale(card.queryId);
    parts.push(`<div class="card-defers">deferred ${defers}x` +
      (rationale ? ` &middot; latest: ${esc(rationale)}` : "") + `</div>`);
  }
  if (card.answer) {
    parts.push(
      `<div class="card-answer">answer <b>${esc(card.answer.label)}</b> ` +
      `at t=${card.answer.respondedAt}s` +
      (card.answer.parseFailure ? " (fallback label)" : "") + `</div>`,
    );
    if (card.evidencePreview.length) {
      const items = card.evidencePreview
        .map((e) => `<li>[${fmtSpan(e.span)}] ${esc(e.snippet)}</li>`)
        .join("");
      parts.push(`<ul class="evidence">${items}</ul>`);
    }
  }
  parts.push("</div>");
  return parts.join("");
}

export function renderApp(store: SessionStore, root: HTMLElement): void {
  const banner = store.banner
    ? `<div class="banner banner-${store.connection}">${esc(store.banner)}</div>`
    : "";
  const timeline = store.timeline
    .map((c) => `<li>[${fmtSpan(c.span)}] ${esc(c.caption ?? "(no caption)")}</li>`)
    .join("");
  const cards = store.queryCards.map((card) => renderCard(store, card)).join("");
  root.innerHTML = `
    ${banner}
    <header>
      <h1>live session console</h1>
      <div class="clock">stream clock: t=${store.streamClock}s` +
      `${store.ended ? " (ended)" : ""}</div>
    </header>
    <section class="controls">
      <input id="query-input" type="text" placeholder="ask about the stream at any moment" />
      <button id="submit-query">ask</button>
      <button id="start-session">start</button>
      <button id="pause-session">pause</button>
      <button id="resume-session">resume</button>
    </section>
    <section class="columns">
      <div class="col"><h2>timeline</h2><ol class="timeline">${timeline}</ol></div>
      <div class="col"><h2>queries</h2>${cards || "<p>no queries yet</p>"}</div>
    </section>
  `;
}
