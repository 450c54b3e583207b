"""Desk-scale experiment campaigns: data generation, training sweeps, and
closed-loop evaluation tables.

Two scenarios are provided.  The "quadratic" scenario labels pairs with a
fixed quadratic-cost preference and reports closed-loop cost statistics
normalized by the known-weight controller.  The "complex" scenario labels
pairs by output settling time with a peak-input tie-break, trains a second
model family on the same pool with tie pairs dropped, and reports settling
and peak-input statistics for both.

All randomness stems from one master seed through tagged sub-streams, so
a repeated run emits byte-identical tables and figure data.  Wall-clock
training times are deliberately kept out of the main table and written to
a separate timings file.
"""

from __future__ import annotations

import dataclasses
import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (
    GenConfig,
    PreferenceDataset,
    build_pairs,
    generate_pool,
    sample_initial_state,
    sample_weights,
    save_dataset,
)
from .learner import (
    TrainConfig,
    TrainedModel,
    make_matrix_init_sampler,
    model_accuracy,
    theta_from_matrices,
    theta_to_matrices,
    train_multistart,
)
from .linsys import make_oscillating_masses
from .mpc import CampaignResult, MpcSpec, evaluate_campaign
from .oracle import pref_quadratic, pref_settling

QUADRATIC_ORACLE_Q = np.diag([40.0, 40.0, 40.0, 5.0, 5.0, 5.0])
QUADRATIC_ORACLE_R = np.diag([0.2, 0.2])
QUADRATIC_ND_SWEEP = (20, 60, 100, 400, 1000)
COMPLEX_ND_SWEEP = (20, 100, 400, 1000)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "quadratic"
    seed: int = 0
    nd_sweep: tuple[int, ...] | None = None
    test_size: int = 500
    n_sims: int = 200
    t_sim: int = 30
    settle_eps: float = 0.1
    input_bound: float | None = None
    restarts: int | None = None
    gen: GenConfig | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.scenario not in ("quadratic", "complex"):
            raise ValueError(f"unknown scenario {self.scenario!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        kwargs = dict(d)
        if kwargs.get("nd_sweep") is not None:
            kwargs["nd_sweep"] = tuple(int(n) for n in kwargs["nd_sweep"])
        if kwargs.get("gen") is not None:
            kwargs["gen"] = GenConfig.from_dict(kwargs["gen"])
        if kwargs.get("train") is not None:
            kwargs["train"] = TrainConfig(**kwargs["train"])
        return cls(**kwargs)


def _sub_rng(master: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master), *map(int, tags)]))


def _sub_seed(master: int, *tags: int) -> int:
    seq = np.random.SeedSequence([int(master), *map(int, tags)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def resolve_config(config: ExperimentConfig) -> ExperimentConfig:
    """Fill in scenario-dependent defaults; idempotent."""
    quadratic = config.scenario == "quadratic"
    nd_sweep = config.nd_sweep or (QUADRATIC_ND_SWEEP if quadratic else COMPLEX_ND_SWEEP)
    gen = config.gen or GenConfig(
        n_t=50,
        horizon=10 if quadratic else 15,
        diag_only=not quadratic,
        oracle="quadratic" if quadratic else "settling",
    )
    gen = dataclasses.replace(gen, seed=_sub_seed(config.seed, 0))
    input_bound = config.input_bound
    if input_bound is None and quadratic:
        input_bound = 1.0
    train = config.train
    if config.restarts is not None:
        train = train.with_overrides(restarts=config.restarts)
    return dataclasses.replace(
        config, nd_sweep=tuple(nd_sweep), gen=gen, input_bound=input_bound, train=train
    )


@dataclass(frozen=True)
class SweepModel:
    nd: int
    variant: str
    model: TrainedModel

    @property
    def name(self) -> str:
        suffix = f"_{self.variant}" if self.variant else ""
        return f"surrogate_{self.nd}{suffix}"


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    models: tuple[SweepModel, ...]
    campaign: CampaignResult
    table_rows: tuple[dict, ...]
    random_test_accuracy: float


def _train_sweep(
    pool,
    nd_sweep: Sequence[int],
    train_master: PreferenceDataset,
    test_set: PreferenceDataset,
    train_config: TrainConfig,
    init_sampler,
    master_seed: int,
    seed_tag: int,
    variant: str,
) -> list[SweepModel]:
    models = []
    for k, nd in enumerate(nd_sweep):
        model = train_multistart(
            train_master.subset(nd),
            test_set,
            train_config,
            init_sampler,
            seed=_sub_seed(master_seed, seed_tag, k),
        )
        models.append(SweepModel(nd=nd, variant=variant, model=model))
    return models


def _bounds(config: ExperimentConfig, n_u: int):
    if config.input_bound is None:
        return None, None
    return -config.input_bound * np.ones(n_u), config.input_bound * np.ones(n_u)


def run_quadratic_experiment(
    config: ExperimentConfig, out_dir: str | Path | None = None
) -> ExperimentResult:
    """Quadratic-preference campaign: training sweep plus closed-loop table."""
    config = resolve_config(config)
    if config.scenario != "quadratic":
        raise ValueError("config.scenario must be 'quadratic'")
    sys = make_oscillating_masses()
    gen = config.gen
    pool = generate_pool(sys, gen)

    def oracle(a, b):
        return pref_quadratic(a, b, QUADRATIC_ORACLE_Q, QUADRATIC_ORACLE_R)

    pairs_rng = _sub_rng(config.seed, 1)
    test_set = build_pairs(pool, config.test_size, oracle, pairs_rng)
    train_master = build_pairs(
        pool,
        max(config.nd_sweep),
        oracle,
        pairs_rng,
        exclude=zip(test_set.i_idx, test_set.j_idx),
    )
    init_sampler = make_matrix_init_sampler(
        lambda rng: sample_weights(rng, gen, sys.n_x, sys.n_u)
    )
    models = _train_sweep(
        pool, config.nd_sweep, train_master, test_set, config.train,
        init_sampler, config.seed, 2, "",
    )

    weights_rng = _sub_rng(config.seed, 3)
    random_weights = [sample_weights(weights_rng, gen, sys.n_x, sys.n_u) for _ in range(config.n_sims)]
    random_acc = float(
        np.mean([model_accuracy(theta_from_matrices(Q, R), test_set) for Q, R in random_weights])
    ) if config.n_sims else float("nan")

    x0_rng = _sub_rng(config.seed, 4)
    x0_set = [
        sample_initial_state(x0_rng, gen.pos_range, gen.vel_range)
        for _ in range(config.n_sims)
    ]
    lo, hi = _bounds(config, sys.n_u)
    entries: list[tuple[str, object]] = [
        ("oracle", MpcSpec(sys, gen.horizon, QUADRATIC_ORACLE_Q, QUADRATIC_ORACLE_R, lo, hi)),
        ("random", tuple(MpcSpec(sys, gen.horizon, Q, R, lo, hi) for Q, R in random_weights)),
    ]
    for sm in models:
        Q_t, R_t = theta_to_matrices(sm.model.theta)
        entries.append((sm.name, MpcSpec(sys, gen.horizon, Q_t, R_t, lo, hi)))
    campaign = evaluate_campaign(
        entries,
        x0_set,
        perf_q=QUADRATIC_ORACLE_Q,
        perf_r=QUADRATIC_ORACLE_R,
        settle_eps=config.settle_eps,
        t_sim=config.t_sim,
        ref_name="oracle",
    )

    table_rows = []
    acc_by_name = {sm.name: sm.model for sm in models}
    for row in campaign.rows:
        model = acc_by_name.get(row.name)
        stats = campaign.cost_stats(row.name)
        table_rows.append({
            "controller": row.name,
            "train_acc": model.train_accuracy if model else None,
            "test_acc": model.test_accuracy if model else (random_acc if row.name == "random" else None),
            "avg_cost": stats["avg"],
            "max_cost": stats["max"],
            "min_cost": stats["min"],
        })

    result = ExperimentResult(
        config=config,
        models=tuple(models),
        campaign=campaign,
        table_rows=tuple(table_rows),
        random_test_accuracy=random_acc,
    )
    if out_dir is not None:
        _write_quadratic_artifacts(result, Path(out_dir), sys, pool, test_set, train_master)
    return result


def run_complex_experiment(
    config: ExperimentConfig, out_dir: str | Path | None = None
) -> ExperimentResult:
    """Settling-time-preference campaign with and without the tie-break labels."""
    config = resolve_config(config)
    if config.scenario != "complex":
        raise ValueError("config.scenario must be 'complex'")
    sys = make_oscillating_masses()
    gen = config.gen
    pool = generate_pool(sys, gen)
    eps = config.settle_eps

    def oracle(a, b):
        return pref_settling(a, b, eps)

    rng_tb = _sub_rng(config.seed, 1)
    test_tb = build_pairs(pool, config.test_size, oracle, rng_tb)
    train_tb = build_pairs(
        pool, max(config.nd_sweep), oracle, rng_tb,
        exclude=zip(test_tb.i_idx, test_tb.j_idx),
    )
    rng_dt = _sub_rng(config.seed, 5)
    test_dt = build_pairs(pool, config.test_size, oracle, rng_dt, drop_kappa_ties=True, settle_eps=eps)
    train_dt = build_pairs(
        pool, max(config.nd_sweep), oracle, rng_dt, drop_kappa_ties=True, settle_eps=eps,
        exclude=zip(test_dt.i_idx, test_dt.j_idx),
    )

    init_sampler = make_matrix_init_sampler(
        lambda rng: sample_weights(rng, gen, sys.n_x, sys.n_u)
    )
    models = _train_sweep(pool, config.nd_sweep, train_tb, test_tb, config.train,
                          init_sampler, config.seed, 2, "tiebreak")
    models += _train_sweep(pool, config.nd_sweep, train_dt, test_dt, config.train,
                           init_sampler, config.seed, 6, "droptie")

    weights_rng = _sub_rng(config.seed, 3)
    random_weights = [sample_weights(weights_rng, gen, sys.n_x, sys.n_u) for _ in range(config.n_sims)]
    random_acc = float(
        np.mean([model_accuracy(theta_from_matrices(Q, R), test_tb) for Q, R in random_weights])
    ) if config.n_sims else float("nan")

    x0_rng = _sub_rng(config.seed, 4)
    x0_set = [
        sample_initial_state(x0_rng, gen.pos_range, gen.vel_range)
        for _ in range(config.n_sims)
    ]
    lo, hi = _bounds(config, sys.n_u)
    entries: list[tuple[str, object]] = [
        ("random", tuple(MpcSpec(sys, gen.horizon, Q, R, lo, hi) for Q, R in random_weights)),
    ]
    for sm in models:
        Q_t, R_t = theta_to_matrices(sm.model.theta)
        entries.append((sm.name, MpcSpec(sys, gen.horizon, Q_t, R_t, lo, hi)))
    campaign = evaluate_campaign(
        entries, x0_set, settle_eps=eps, t_sim=config.t_sim,
    )

    by_variant = {(sm.nd, sm.variant): sm for sm in models}
    table_rows = []
    random_stats = campaign.settle_stats("random")
    table_rows.append({
        "controller": "random",
        "train_acc": None,
        "test_acc": random_acc,
        "med_settle_tiebreak": random_stats["median"],
        "max_settle_tiebreak": random_stats["max"],
        "avg_max_input_tiebreak": campaign.input_stats("random")["avg"],
        "med_settle_droptie": random_stats["median"],
        "max_settle_droptie": random_stats["max"],
        "avg_max_input_droptie": campaign.input_stats("random")["avg"],
    })
    for nd in config.nd_sweep:
        tb = by_variant[(nd, "tiebreak")]
        dt = by_variant[(nd, "droptie")]
        s_tb = campaign.settle_stats(tb.name)
        s_dt = campaign.settle_stats(dt.name)
        table_rows.append({
            "controller": f"surrogate_{nd}",
            "train_acc": tb.model.train_accuracy,
            "test_acc": tb.model.test_accuracy,
            "med_settle_tiebreak": s_tb["median"],
            "max_settle_tiebreak": s_tb["max"],
            "avg_max_input_tiebreak": campaign.input_stats(tb.name)["avg"],
            "med_settle_droptie": s_dt["median"],
            "max_settle_droptie": s_dt["max"],
            "avg_max_input_droptie": campaign.input_stats(dt.name)["avg"],
        })

    result = ExperimentResult(
        config=config,
        models=tuple(models),
        campaign=campaign,
        table_rows=tuple(table_rows),
        random_test_accuracy=random_acc,
    )
    if out_dir is not None:
        _write_complex_artifacts(
            result, Path(out_dir), sys, pool,
            {"tiebreak": (train_tb, test_tb), "droptie": (train_dt, test_dt)},
        )
    return result


def _fmt_acc(v) -> str:
    return "-" if v is None else f"{100.0 * v:.1f}"


def _fmt_cost(v) -> str:
    return "-" if v is None else f"{v:.3f}"


def _fmt_settle(v, t_sim: int) -> str:
    return f">{t_sim}" if v >= t_sim else f"{v:g}"


def write_quadratic_table(rows: Sequence[dict], path: Path):
    lines = ["controller,train_acc,test_acc,avg_cost,max_cost,min_cost"]
    for r in rows:
        lines.append(
            f"{r['controller']},{_fmt_acc(r['train_acc'])},{_fmt_acc(r['test_acc'])},"
            f"{_fmt_cost(r['avg_cost'])},{_fmt_cost(r['max_cost'])},{_fmt_cost(r['min_cost'])}"
        )
    path.write_text("\n".join(lines) + "\n")


def write_complex_table(rows: Sequence[dict], t_sim: int, path: Path):
    lines = [
        "controller,train_acc,test_acc,"
        "med_settle_tiebreak,max_settle_tiebreak,avg_max_input_tiebreak,"
        "med_settle_droptie,max_settle_droptie,avg_max_input_droptie"
    ]
    for r in rows:
        lines.append(
            f"{r['controller']},{_fmt_acc(r['train_acc'])},{_fmt_acc(r['test_acc'])},"
            f"{_fmt_settle(r['med_settle_tiebreak'], t_sim)},"
            f"{_fmt_settle(r['max_settle_tiebreak'], t_sim)},"
            f"{r['avg_max_input_tiebreak']:.2f},"
            f"{_fmt_settle(r['med_settle_droptie'], t_sim)},"
            f"{_fmt_settle(r['max_settle_droptie'], t_sim)},"
            f"{r['avg_max_input_droptie']:.2f}"
        )
    path.write_text("\n".join(lines) + "\n")


def write_timings(models: Sequence[SweepModel], path: Path):
    lines = ["controller,train_time_s"]
    for sm in models:
        lines.append(f"{sm.name},{sm.model.wall_time:.3f}")
    path.write_text("\n".join(lines) + "\n")


def emit_figure_data(campaign: CampaignResult, out_dir: str | Path):
    """Plot-ready CSVs: per-controller metric distributions and mean output norms."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [row.name for row in campaign.rows]
    header = ",".join(names)

    if campaign.rows and all(row.costs is not None for row in campaign.rows):
        if len(campaign.rows[0].costs):
            ref = campaign.ref_avg_cost()
            cols = [np.asarray(row.costs) / ref for row in campaign.rows]
        else:
            cols = [np.empty(0) for _ in campaign.rows]
        _write_columns(out_dir / "fig_cost_distribution.csv", header, cols)
    _write_columns(
        out_dir / "fig_settle_distribution.csv",
        header,
        [np.asarray(row.settle_idx, dtype=float) for row in campaign.rows],
    )
    norm_cols = []
    for row in campaign.rows:
        if row.trajectories:
            norms = np.stack([np.linalg.norm(t.Y, axis=1) for t in row.trajectories])
            norm_cols.append(norms.mean(axis=0))
        else:
            norm_cols.append(np.empty(0))
    _write_columns(out_dir / "fig_output_norm.csv", header, norm_cols)


def _write_columns(path: Path, header: str, cols: list[np.ndarray]):
    n = min((len(c) for c in cols), default=0)
    lines = [header]
    for k in range(n):
        lines.append(",".join(f"{c[k]:.6g}" for c in cols))
    path.write_text("\n".join(lines) + "\n")


def _dump_common(result: ExperimentResult, out: Path, sys, pool):
    out.mkdir(parents=True, exist_ok=True)
    cfg = dataclasses.asdict(result.config)
    (out / "config.json").write_text(json.dumps(cfg, indent=1, default=str))
    models_dir = out / "models"
    models_dir.mkdir(exist_ok=True)
    for sm in result.models:
        (models_dir / f"{sm.name}.json").write_text(json.dumps(sm.model.to_dict()))
    traj_dir = out / "trajectories"
    traj_dir.mkdir(exist_ok=True)
    for row in result.campaign.rows:
        doc = {"controller": row.name, "trajectories": [t.to_dict() for t in row.trajectories]}
        (traj_dir / f"{row.name}.json").write_text(json.dumps(doc))
    emit_figure_data(result.campaign, out / "figures")
    write_timings(result.models, out / "timings.csv")


def _write_quadratic_artifacts(result, out: Path, sys, pool, test_set, train_master):
    _dump_common(result, out, sys, pool)
    data_dir = out / "datasets"
    data_dir.mkdir(exist_ok=True)
    save_dataset(data_dir / "train.json", train_master, sys, result.config.gen, result.config.seed)
    save_dataset(data_dir / "test.json", test_set, sys, result.config.gen, result.config.seed)
    write_quadratic_table(result.table_rows, out / "table.csv")


def _write_complex_artifacts(result, out: Path, sys, pool, splits):
    _dump_common(result, out, sys, pool)
    data_dir = out / "datasets"
    data_dir.mkdir(exist_ok=True)
    for variant, (train_set, test_set) in splits.items():
        save_dataset(data_dir / f"train_{variant}.json", train_set, sys, result.config.gen,
                     result.config.seed)
        save_dataset(data_dir / f"test_{variant}.json", test_set, sys, result.config.gen,
                     result.config.seed)
    write_complex_table(result.table_rows, result.config.t_sim, out / "table.csv")
