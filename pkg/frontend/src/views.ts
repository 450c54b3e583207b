/** HTML renderers; pure string builders so they are testable without a DOM. */

import { lineChart, Series } from "./charts.js";
import { metricWarnings, outputNorms } from "./metrics.js";
import { SessionStore } from "./state.js";
import { SimulationPayload, TrajectoryWire } from "./types.js";

export const INPUT_BOUND_GUIDES = [-1, 1];

function columnSeries(rows: number[][], prefix: string): Series[] {
  const n = rows[0]?.length ?? 0;
  return Array.from({ length: n }, (_, c) => ({
    label: `${prefix}${c + 1}`,
    values: rows.map((r) => r[c]),
  }));
}

export function renderTrajectoryCharts(traj: TrajectoryWire, tag: string): string {
  const outputs = lineChart(columnSeries(traj.Y, "p"), { title: `${tag}: outputs` });
  const inputs = lineChart(columnSeries(traj.U, "u"), {
    title: `${tag}: inputs`,
    guides: INPUT_BOUND_GUIDES,
  });
  return `<div class="traj-charts">${outputs}${inputs}</div>`;
}

export function renderPairView(store: SessionStore): string {
  if (store.exhausted) {
    return `<p class="status">All trajectory pairs have been labeled.</p>`;
  }
  const pair = store.pair;
  if (!pair || !pair.a || !pair.b) {
    return `<p class="status">Loading pair…</p>`;
  }
  const disabled = store.busy ? "disabled" : "";
  return `
  <div class="pair-grid">
    <div class="pair-col">
      <h3>Candidate A</h3>
      ${renderTrajectoryCharts(pair.a, "A")}
      <button data-action="prefer-a" ${disabled}>Prefer A</button>
    </div>
    <div class="pair-col">
      <h3>Candidate B</h3>
      ${renderTrajectoryCharts(pair.b, "B")}
      <button data-action="prefer-b" ${disabled}>Prefer B</button>
    </div>
  </div>`;
}

function heatTable(M: number[][], label: string): string {
  const peak = Math.max(...M.flat().map(Math.abs), 1e-12);
  const rows = M.map(
    (row) =>
      `<tr>${row
        .map((v) => {
          const alpha = (Math.abs(v) / peak).toFixed(3);
          const color = v >= 0 ? `rgba(31,119,180,${alpha})` : `rgba(214,39,40,${alpha})`;
          return `<td style="background:${color}" title="${v.toExponential(3)}">${v.toFixed(2)}</td>`;
        })
        .join("")}</tr>`,
  );
  return `<figure class="heat"><figcaption>${label}</figcaption><table>${rows.join("")}</table></figure>`;
}

export function renderTrainingPanel(store: SessionStore): string {
  const disabled = store.labelCount === 0 || store.busy ? "disabled" : "";
  const rows = store.models
    .map((m) => {
      const active = m.id === store.activeModel ? " (active)" : "";
      const holdout = m.holdoutAcc === null ? "-" : `${(100 * m.holdoutAcc).toFixed(1)}%`;
      return `<li>${m.id}${active}: train ${(100 * m.trainAcc).toFixed(1)}%, holdout ${holdout}</li>`;
    })
    .join("");
  const activeEntry = store.models.find((m) => m.id === store.activeModel);
  const heat = activeEntry
    ? heatTable(activeEntry.Q, "state weights") + heatTable(activeEntry.R, "input weights")
    : "";
  return `
  <div class="training">
    <p>Labels collected: <strong data-role="label-count">${store.labelCount}</strong></p>
    <button data-action="train" ${disabled}>Train on labels</button>
    <ul class="models">${rows}</ul>
    ${heat}
  </div>`;
}

export function renderClosedLoopCompare(
  sims: SimulationPayload[],
  eps: number,
): string {
  if (sims.length === 0) {
    return `<p class="status">Run a simulation to compare controllers.</p>`;
  }
  const normSeries: Series[] = sims.map((sim, k) => ({
    label: `${sim.model_id}#${k}`,
    values: outputNorms(sim.trajectory),
  }));
  const inputSeries: Series[] = sims.map((sim, k) => ({
    label: `${sim.model_id}#${k}`,
    values: sim.trajectory.U.map((row) => Math.max(...row.map(Math.abs))),
  }));
  const firstSettled = sims.find((s) => s.metrics.settled);
  const marker = firstSettled ? firstSettled.metrics.settle_index : null;
  const warnings = sims.flatMap((sim, k) =>
    metricWarnings(sim.trajectory, sim.metrics, eps).map((w) => `${sim.model_id}#${k}: ${w}`),
  );
  const warnHtml = warnings.length
    ? `<div class="warning" data-role="metric-warning">${warnings.join("<br>")}</div>`
    : "";
  const metricRows = sims
    .map((sim, k) => {
      const settle = sim.metrics.settled ? String(sim.metrics.settle_index) : `&gt;${sim.trajectory.N}`;
      const cost = sim.metrics.cost === undefined ? "-" : sim.metrics.cost.toFixed(3);
      return (
        `<tr><td>${sim.model_id}#${k}</td><td>${settle}</td>` +
        `<td>${sim.metrics.max_input.toFixed(3)}</td><td>${cost}</td></tr>`
      );
    })
    .join("");
  return `
  <div class="compare">
    ${warnHtml}
    ${lineChart(normSeries, { title: "output norm", marker })}
    ${lineChart(inputSeries, { title: "peak input per step", guides: INPUT_BOUND_GUIDES })}
    <table class="metrics">
      <thead><tr><th>run</th><th>settling</th><th>max input</th><th>cost</th></tr></thead>
      <tbody>${metricRows}</tbody>
    </table>
  </div>`;
}
