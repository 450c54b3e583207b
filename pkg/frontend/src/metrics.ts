/** Client-side recomputation of the trajectory metrics the server reports.
 *
 * Used only for display cross-checks: a disagreement beyond tolerance
 * surfaces a visible warning, catching wire-format drift.
 */

import { SettlingResult, TrajectoryWire } from "./types.js";

export function outputNorms(traj: TrajectoryWire): number[] {
  return traj.Y.map((row) => Math.sqrt(row.reduce((acc, v) => acc + v * v, 0)));
}

/** First step after which the output 2-norm stays at or below eps.
 *  Never-settling trajectories get the sentinel index N. */
export function settlingTime(traj: TrajectoryWire, eps: number): SettlingResult {
  const norms = outputNorms(traj);
  let lastAbove = -1;
  for (let k = 0; k < norms.length; k++) {
    if (norms[k] > eps) lastAbove = k;
  }
  if (lastAbove === -1) return { settled: true, index: 0 };
  const index = lastAbove + 1;
  if (index >= traj.N) return { settled: false, index: traj.N };
  return { settled: true, index };
}

export function maxInputInfNorm(traj: TrajectoryWire): number {
  let worst = 0;
  for (const row of traj.U) {
    for (const v of row) {
      const a = Math.abs(v);
      if (a > worst) worst = a;
    }
  }
  return worst;
}

export const METRIC_TOLERANCE = 1e-6;

/** Compare server metrics against local recomputation; empty when consistent. */
export function metricWarnings(
  traj: TrajectoryWire,
  server: { settled: boolean; settle_index: number; max_input: number },
  eps: number,
): string[] {
  const warnings: string[] = [];
  const settle = settlingTime(traj, eps);
  if (settle.settled !== server.settled || settle.index !== server.settle_index) {
    warnings.push(
      `settling mismatch: client ${settle.index} (settled=${settle.settled}) ` +
        `vs server ${server.settle_index} (settled=${server.settled})`,
    );
  }
  if (Math.abs(maxInputInfNorm(traj) - server.max_input) > METRIC_TOLERANCE) {
    warnings.push(
      `max-input mismatch: client ${maxInputInfNorm(traj)} vs server ${server.max_input}`,
    );
  }
  return warnings;
}
