/** Browser bootstrap: one store, one render loop, delegated events. */

import { ApiClient } from "./api.js";
import { SessionStore } from "./state.js";
import { renderClosedLoopCompare, renderPairView, renderTrainingPanel } from "./views.js";

const API_BASE = (window as unknown as { PREFMPC_API?: string }).PREFMPC_API ?? "";
const SETTLE_EPS = 0.1;

const api = new ApiClient(API_BASE);
const store = new SessionStore(api, render);

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function render(): void {
  el("pair-panel").innerHTML = renderPairView(store);
  el("training-panel").innerHTML = renderTrainingPanel(store);
  el("compare-panel").innerHTML = renderClosedLoopCompare(store.simulations, SETTLE_EPS);
  el("status-line").textContent = store.lastError
    ? `error: ${store.lastError}`
    : store.busy
      ? "working…"
      : "ready";
  const picker = el("model-picker") as HTMLSelectElement;
  const options = ["oracle", "random", ...store.models.map((m) => m.id)];
  if (picker.options.length !== options.length) {
    picker.innerHTML = options
      .map((id) => `<option value="${id}">${id}</option>`)
      .join("");
  }
}

document.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const action = target.dataset?.action;
  if (!action) return;
  if (action === "prefer-a") void store.choose("first").then(render);
  if (action === "prefer-b") void store.choose("second").then(render);
  if (action === "train") void store.train().then(render);
  if (action === "simulate") {
    const picker = el("model-picker") as HTMLSelectElement;
    void store.simulate(picker.value).then(render);
  }
  if (action === "clear-sims") {
    store.clearSimulations();
    render();
  }
});

void store
  .start()
  .then(render)
  .catch((e) => {
    el("status-line").textContent = `failed to start session: ${e}`;
  });
