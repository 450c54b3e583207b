/** Wire types mirroring the backend payloads. */

export interface TrajectoryWire {
  N: number;
  X: number[][];
  U: number[][];
  Y: number[][];
}

export interface PairPayload {
  status: "ok" | "exhausted";
  pair_id?: string;
  a?: TrajectoryWire;
  b?: TrajectoryWire;
}

export interface SimMetrics {
  settled: boolean;
  settle_index: number;
  max_input: number;
  cost?: number;
}

export interface SimulationPayload {
  model_id: string;
  trajectory: TrajectoryWire;
  metrics: SimMetrics;
}

export interface TrainResponse {
  model_id: string;
  train_acc: number;
  holdout_acc: number | null;
  theta: number[];
  Q: number[][];
  R: number[][];
  final_loss: number;
}

export interface SessionSummary {
  id: string;
  n_trajectories: number;
  horizon: number;
  label_count: number;
  pairs_remaining: number;
  pending_pair_id: string | null;
  models: string[];
  labels: { i: number; j: number; p: number }[];
}

export interface SettlingResult {
  settled: boolean;
  index: number;
}
