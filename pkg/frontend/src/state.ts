/** Session state machine.
 *
 * All preference logic lives server-side; this store only sequences API
 * calls.  At most one mutation request is in flight: user actions while
 * ``busy`` are dropped, so a double click or a re-render can never store
 * a duplicate label.
 */

import { ApiClient } from "./api.js";
import { PairPayload, SimulationPayload, TrainResponse } from "./types.js";

export interface ModelEntry {
  id: string;
  trainAcc: number;
  holdoutAcc: number | null;
  Q: number[][];
  R: number[][];
}

export class SessionStore {
  sessionId: string | null = null;
  pair: PairPayload | null = null;
  labelCount = 0;
  busy = false;
  exhausted = false;
  models: ModelEntry[] = [];
  activeModel: string | null = null;
  simulations: SimulationPayload[] = [];
  lastError: string | null = null;

  constructor(
    private api: ApiClient,
    private onChange: () => void = () => {},
  ) {}

  private notify() {
    this.onChange();
  }

  async start(config: Record<string, unknown> = {}): Promise<void> {
    const { id } = await this.api.createSession(config);
    this.sessionId = id;
    await this.refreshPair();
  }

  /** Idempotent: re-fetching without labeling returns the same pending pair. */
  async refreshPair(): Promise<void> {
    if (!this.sessionId) return;
    const pair = await this.api.nextPair(this.sessionId);
    this.exhausted = pair.status === "exhausted";
    this.pair = this.exhausted ? null : pair;
    this.notify();
  }

  /** One click, one stored label; ignored while another request runs. */
  async choose(choice: "first" | "second"): Promise<void> {
    if (this.busy || !this.sessionId || !this.pair || !this.pair.pair_id) return;
    this.busy = true;
    this.notify();
    try {
      const { label_count } = await this.api.submitPreference(
        this.sessionId,
        this.pair.pair_id,
        choice,
      );
      this.labelCount = label_count;
      this.pair = null;
      this.lastError = null;
    } catch (e) {
      this.lastError = e instanceof Error ? e.message : String(e);
    } finally {
      this.busy = false;
    }
    await this.refreshPair();
  }

  async train(overrides: Record<string, unknown> = {}): Promise<void> {
    if (this.busy || !this.sessionId || this.labelCount === 0) return;
    this.busy = true;
    this.notify();
    try {
      const resp: TrainResponse = await this.api.train(this.sessionId, overrides);
      this.models.push({
        id: resp.model_id,
        trainAcc: resp.train_acc,
        holdoutAcc: resp.holdout_acc,
        Q: resp.Q,
        R: resp.R,
      });
      this.activeModel = resp.model_id;
      this.lastError = null;
    } catch (e) {
      this.lastError = e instanceof Error ? e.message : String(e);
    } finally {
      this.busy = false;
      this.notify();
    }
  }

  async simulate(modelId: string, x0: number[] | null = null): Promise<void> {
    if (this.busy || !this.sessionId) return;
    this.busy = true;
    this.notify();
    try {
      const sim = await this.api.simulate(this.sessionId, modelId, x0);
      this.simulations.push(sim);
      this.lastError = null;
    } catch (e) {
      this.lastError = e instanceof Error ? e.message : String(e);
    } finally {
      this.busy = false;
      this.notify();
    }
  }

  clearSimulations(): void {
    this.simulations = [];
    this.notify();
  }
}
