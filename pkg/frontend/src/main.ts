import { SessionClient } from "./client.js";
import { renderApp } from "./render.js";
import { SessionStore } from "./store.js";

const params = new URLSearchParams(window.location.search);
const url = params.get("session") ?? `ws://${window.location.hostname || "127.0.0.1"}:8765/ws`;

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const store = new SessionStore();
const client = new SessionClient({ url, store });

function rerender(): void {
  renderApp(store, root as HTMLElement);
  const input = document.getElementById("query-input") as HTMLInputElement | null;
  document.getElementById("submit-query")?.addEventListener("click", () => {
    if (input && client.submitQuery(input.value)) input.value = "";
  });
  input?.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && client.submitQuery(input.value)) input.value = "";
  });
  document.getElementById("start-session")?.addEventListener("click", () => client.start());
  document.getElementById("pause-session")?.addEventListener("click", () => client.pause());
  document.getElementById("resume-session")?.addEventListener("click", () => client.resume());
}

store.onChange(rerender);
rerender();
client.connect();
