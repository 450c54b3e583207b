"""HTTP service for live preference elicitation, training, and simulation.

Sessions are held in memory.  Each session owns a trajectory pool, a
pre-shuffled queue of unlabeled ordered pairs, the labels collected so
far, and the models trained from them.  Requests touching one session
are serialized through its lock; training runs synchronously on the
request (desk-scale fits comfortably in a few seconds).

Every result obtainable through this API is produced by the same library
calls a script would make, with seeds derived only from the session seed,
so API-driven and in-process workflows agree bit for bit.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .dataset import GenConfig, PreferenceDataset, TrajectoryPool, generate_pool, sample_weights
from .learner import (
    TrainConfig,
    TrainedModel,
    make_matrix_init_sampler,
    theta_to_matrices,
    train_holdout,
)
from .linsys import make_oscillating_masses
from .mpc import MpcSpec, closed_loop
from .trajectory import max_input_inf_norm, quad_cost, settling_time

DEFAULT_ORACLE_Q = [40.0, 40.0, 40.0, 5.0, 5.0, 5.0]
DEFAULT_ORACLE_R = [0.2, 0.2]


class SessionConfig(BaseModel):
    scenario: str = "quadratic"
    n_t: int = Field(default=50, ge=2)
    horizon: int | None = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0)
    input_bound: float | None = None
    settle_eps: float = Field(default=0.1, gt=0)
    t_sim: int = Field(default=30, ge=1)
    oracle_q_diag: list[float] | None = None
    oracle_r_diag: list[float] | None = None


class TrainOverrides(BaseModel):
    adam_iters: int | None = None
    adam_lr: float | None = None
    lbfgs_max_iters: int | None = None
    rho: float | None = None
    restarts: int | None = None
    holdout_frac: float = Field(default=0.2, gt=0, lt=1)


class PreferenceRequest(BaseModel):
    pair_id: str
    choice: str


class SimulateRequest(BaseModel):
    model_id: str
    x0: list[float] | None = None


def gen_config_for_session(config: SessionConfig) -> GenConfig:
    """Pool-generation plan implied by a session config (shared with tests)."""
    quadratic = config.scenario == "quadratic"
    return GenConfig(
        n_t=config.n_t,
        horizon=config.horizon if config.horizon is not None else (10 if quadratic else 15),
        diag_only=not quadratic,
        seed=config.seed,
        oracle="human",
    )


def pair_order_for_session(n_t: int, seed: int) -> list[tuple[int, int]]:
    """Deterministic uniform shuffle of all ordered distinct index pairs."""
    pairs = [(i, j) for i in range(n_t) for j in range(n_t) if i != j]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    return [pairs[k] for k in rng.permutation(len(pairs))]


@dataclass
class Session:
    id: str
    config: SessionConfig
    pool: TrajectoryPool
    pair_order: list[tuple[int, int]]
    cursor: int = 0
    pending: tuple[str, int, int] | None = None
    labels: list[tuple[int, int, int]] = field(default_factory=list)
    labeled_ids: set[str] = field(default_factory=set)
    models: dict[str, TrainedModel] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)
    sim_rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def summary(self) -> dict:
        return {
            "id": self.id,
            "n_trajectories": self.pool.n_t,
            "horizon": self.pool.horizon,
            "label_count": len(self.labels),
            "pairs_remaining": len(self.pair_order) - self.cursor,
            "pending_pair_id": self.pending[0] if self.pending else None,
            "models": list(self.models),
            "labels": [{"i": i, "j": j, "p": p} for i, j, p in self.labels],
            "config": self.config.model_dump(),
        }


def _oracle_weights(config: SessionConfig) -> tuple[np.ndarray, np.ndarray] | None:
    if config.oracle_q_diag is not None and config.oracle_r_diag is not None:
        return np.diag(config.oracle_q_diag), np.diag(config.oracle_r_diag)
    if config.scenario == "quadratic":
        return np.diag(DEFAULT_ORACLE_Q), np.diag(DEFAULT_ORACLE_R)
    return None


def _input_bound(config: SessionConfig) -> float | None:
    if config.input_bound is not None:
        return config.input_bound
    return 1.0 if config.scenario == "quadratic" else None


def default_ui_dir() -> Path | None:
    """Browser UI directory when running from a source checkout."""
    candidate = Path(__file__).resolve().parents[2] / "frontend"
    return candidate if (candidate / "index.html").exists() else None


def create_app(ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="prefmpc", version="0.1.0")
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    system = make_oscillating_masses()

    ui_dir = ui_dir if ui_dir is not None else default_ui_dir()
    if ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    def get_session(session_id: str) -> Session:
        sess = sessions.get(session_id)
        if sess is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
        return sess

    @app.post("/sessions")
    def create_session(config: SessionConfig | None = None) -> dict:
        config = config or SessionConfig()
        if config.scenario not in ("quadratic", "complex"):
            raise HTTPException(status_code=400, detail=f"unknown scenario {config.scenario!r}")
        pool = generate_pool(system, gen_config_for_session(config))
        sess = Session(
            id=uuid.uuid4().hex[:12],
            config=config,
            pool=pool,
            pair_order=pair_order_for_session(pool.n_t, config.seed),
            sim_rng=np.random.default_rng(np.random.SeedSequence([config.seed, 2])),
        )
        with registry_lock:
            sessions[sess.id] = sess
        return {"id": sess.id}

    @app.get("/sessions/{session_id}")
    def session_summary(session_id: str) -> dict:
        sess = get_session(session_id)
        with sess.lock:
            return sess.summary()

    @app.get("/sessions/{session_id}/pairs/next")
    def next_pair(session_id: str) -> dict:
        sess = get_session(session_id)
        with sess.lock:
            if sess.pending is None:
                if sess.cursor >= len(sess.pair_order):
                    return {"status": "exhausted"}
                i, j = sess.pair_order[sess.cursor]
                sess.pending = (f"p{sess.cursor}", i, j)
            pair_id, i, j = sess.pending
            return {
                "status": "ok",
                "pair_id": pair_id,
                "a": sess.pool.trajectories[i].to_dict(),
                "b": sess.pool.trajectories[j].to_dict(),
            }

    @app.post("/sessions/{session_id}/preferences")
    def submit_preference(session_id: str, req: PreferenceRequest) -> dict:
        sess = get_session(session_id)
        if req.choice not in ("first", "second"):
            raise HTTPException(status_code=400, detail="choice must be 'first' or 'second'")
        with sess.lock:
            if req.pair_id in sess.labeled_ids:
                raise HTTPException(status_code=409, detail=f"pair {req.pair_id!r} already labeled")
            if sess.pending is None or sess.pending[0] != req.pair_id:
                raise HTTPException(status_code=404, detail=f"unknown pair id {req.pair_id!r}")
            _, i, j = sess.pending
            sess.labels.append((i, j, 1 if req.choice == "first" else 0))
            sess.labeled_ids.add(req.pair_id)
            sess.pending = None
            sess.cursor += 1
            return {"label_count": len(sess.labels)}

    @app.post("/sessions/{session_id}/train")
    def train_session(session_id: str, overrides: TrainOverrides | None = None) -> dict:
        sess = get_session(session_id)
        overrides = overrides or TrainOverrides()
        with sess.lock:
            if len(sess.labels) < 2:
                raise HTTPException(
                    status_code=400,
                    detail=f"need at least 2 labels to train, have {len(sess.labels)}",
                )
            data = PreferenceDataset(
                pool=sess.pool,
                i_idx=[l[0] for l in sess.labels],
                j_idx=[l[1] for l in sess.labels],
                labels=[l[2] for l in sess.labels],
            )
            train_kwargs = {
                k: v
                for k, v in overrides.model_dump().items()
                if v is not None and k != "holdout_frac"
            }
            config = TrainConfig(**train_kwargs)
            gen = gen_config_for_session(sess.config)
            sampler = make_matrix_init_sampler(
                lambda rng: sample_weights(rng, gen, system.n_x, system.n_u)
            )
            model = train_holdout(
                data, config, sampler,
                seed=sess.config.seed, holdout_frac=overrides.holdout_frac,
            )
            model_id = f"m{len(sess.models)}"
            sess.models[model_id] = model
            Q, R = theta_to_matrices(model.theta)
            return {
                "model_id": model_id,
                "train_acc": model.train_accuracy,
                "holdout_acc": model.test_accuracy,
                "theta": model.theta.values.tolist(),
                "Q": Q.tolist(),
                "R": R.tolist(),
                "final_loss": model.final_loss,
            }

    @app.post("/sessions/{session_id}/simulate")
    def simulate_session(session_id: str, req: SimulateRequest) -> dict:
        sess = get_session(session_id)
        with sess.lock:
            config = sess.config
            gen = gen_config_for_session(config)
            oracle = _oracle_weights(config)
            if req.model_id == "oracle":
                if oracle is None:
                    raise HTTPException(
                        status_code=400, detail="session has no oracle weights configured"
                    )
                Q, R = oracle
            elif req.model_id == "random":
                Q, R = sample_weights(sess.sim_rng, gen, system.n_x, system.n_u)
            elif req.model_id in sess.models:
                Q, R = theta_to_matrices(sess.models[req.model_id].theta)
            else:
                raise HTTPException(status_code=404, detail=f"unknown model {req.model_id!r}")
            bound = _input_bound(config)
            lo = -bound * np.ones(system.n_u) if bound is not None else None
            hi = bound * np.ones(system.n_u) if bound is not None else None
            spec = MpcSpec(system, gen.horizon, Q, R, lo, hi)
            if req.x0 is not None:
                x0 = np.asarray(req.x0, dtype=float)
                if x0.shape != (system.n_x,):
                    raise HTTPException(
                        status_code=400, detail=f"x0 must have length {system.n_x}"
                    )
            else:
                x0 = np.concatenate([
                    sess.sim_rng.uniform(-0.3, 0.3, 3),
                    sess.sim_rng.uniform(-0.05, 0.05, 3),
                ])
            traj = closed_loop(spec, x0, config.t_sim).trajectory
            settle = settling_time(traj, config.settle_eps)
            metrics = {
                "settled": settle.settled,
                "settle_index": settle.index,
                "max_input": max_input_inf_norm(traj),
            }
            if oracle is not None:
                metrics["cost"] = quad_cost(traj, oracle[0], oracle[1])
            return {"model_id": req.model_id, "trajectory": traj.to_dict(), "metrics": metrics}

    return app
