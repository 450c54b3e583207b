"""Command-line entry point for data generation, training, evaluation, and serving."""

from __future__ import annotations

import argparse
import json
import sys as _sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import learner, mpc
from .errors import ConvergenceError, DatasetFormatError, GenerationError, TrainingError
from .experiments import (
    QUADRATIC_ORACLE_Q,
    QUADRATIC_ORACLE_R,
    ExperimentConfig,
    emit_figure_data,
    resolve_config,
    run_complex_experiment,
    run_quadratic_experiment,
    write_quadratic_table,
)
from .linsys import make_oscillating_masses
from .oracle import pref_quadratic, pref_settling


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
        config = ExperimentConfig.from_dict(doc)
    else:
        config = ExperimentConfig(scenario=getattr(args, "scenario", "quadratic"))
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "nd", None):
        overrides["nd_sweep"] = tuple(int(n) for n in args.nd.split(","))
    if getattr(args, "restarts", None) is not None:
        overrides["restarts"] = args.restarts
    if getattr(args, "scenario", None) is not None:
        overrides["scenario"] = args.scenario
    if overrides:
        import dataclasses

        config = dataclasses.replace(config, **overrides)
    return config


def _oracle_for(config: ExperimentConfig):
    if config.scenario == "quadratic":
        return lambda a, b: pref_quadratic(a, b, QUADRATIC_ORACLE_Q, QUADRATIC_ORACLE_R)
    return lambda a, b: pref_settling(a, b, config.settle_eps)


def _cmd_generate_data(args) -> int:
    config = resolve_config(_load_config(args))
    system = make_oscillating_masses()
    pool = ds.generate_pool(system, config.gen)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    data = ds.build_pairs(
        pool,
        args.pairs,
        _oracle_for(config),
        rng,
        drop_kappa_ties=args.drop_ties,
        settle_eps=config.settle_eps,
    )
    ds.save_dataset(args.out, data, system, config.gen, config.seed)
    print(f"wrote {data.n_pairs} labeled pairs over {pool.n_t} trajectories to {args.out}")
    return 0


def _cmd_train(args) -> int:
    loaded = ds.load_dataset(args.data)
    config = resolve_config(_load_config(args))
    test = ds.load_dataset(args.test).dataset if args.test else None
    sampler = learner.make_matrix_init_sampler(
        lambda rng: ds.sample_weights(
            rng, loaded.config or config.gen,
            loaded.dataset.pool.trajectories[0].X.shape[1],
            loaded.dataset.pool.trajectories[0].U.shape[1],
        )
    )
    if test is not None:
        model = learner.train_multistart(loaded.dataset, test, config.train, sampler,
                                         seed=config.seed)
    else:
        model = learner.train_holdout(loaded.dataset, config.train, sampler, seed=config.seed)
    Path(args.out).write_text(json.dumps(model.to_dict(), indent=1))
    test_acc = "-" if model.test_accuracy is None else f"{100 * model.test_accuracy:.1f}%"
    print(
        f"trained model: train acc {100 * model.train_accuracy:.1f}%, "
        f"selection acc {test_acc}, loss {model.final_loss:.4g} -> {args.out}"
    )
    return 0


def _spec_from_model(model: learner.TrainedModel, config: ExperimentConfig) -> mpc.MpcSpec:
    system = make_oscillating_masses()
    Q, R = learner.theta_to_matrices(model.theta)
    lo = hi = None
    if config.input_bound is not None:
        lo = -config.input_bound * np.ones(system.n_u)
        hi = config.input_bound * np.ones(system.n_u)
    return mpc.MpcSpec(system, config.gen.horizon, Q, R, lo, hi)


def _cmd_evaluate(args) -> int:
    config = resolve_config(_load_config(args))
    entries = []
    for path in args.models:
        model = learner.TrainedModel.from_dict(json.loads(Path(path).read_text()))
        entries.append((Path(path).stem, _spec_from_model(model, config)))
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 4]))
    x0_set = [
        ds.sample_initial_state(rng, config.gen.pos_range, config.gen.vel_range)
        for _ in range(args.sims)
    ]
    perf_q = QUADRATIC_ORACLE_Q if config.scenario == "quadratic" else None
    perf_r = QUADRATIC_ORACLE_R if config.scenario == "quadratic" else None
    campaign = mpc.evaluate_campaign(
        entries, x0_set, perf_q=perf_q, perf_r=perf_r,
        settle_eps=config.settle_eps, t_sim=config.t_sim,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_figure_data(campaign, out)
    rows = []
    for row in campaign.rows:
        stats = campaign.cost_stats(row.name)
        rows.append({
            "controller": row.name, "train_acc": None, "test_acc": None,
            "avg_cost": stats["avg"], "max_cost": stats["max"], "min_cost": stats["min"],
        })
        settle = campaign.settle_stats(row.name)
        print(
            f"{row.name}: median settle {settle['median']:g}, "
            f"avg max input {campaign.input_stats(row.name)['avg']:.2f}"
        )
    if all(r["avg_cost"] is not None for r in rows):
        write_quadratic_table(rows, out / "table.csv")
    return 0


def _cmd_simulate(args) -> int:
    config = resolve_config(_load_config(args))
    model = learner.TrainedModel.from_dict(json.loads(Path(args.model).read_text()))
    spec = _spec_from_model(model, config)
    if args.x0:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    else:
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 4]))
        x0 = ds.sample_initial_state(rng, config.gen.pos_range, config.gen.vel_range)
    result = mpc.closed_loop(spec, x0, config.t_sim)
    doc = result.trajectory.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(doc))
    from .trajectory import max_input_inf_norm, settling_time

    settle = settling_time(result.trajectory, config.settle_eps)
    settle_str = str(settle.index) if settle.settled else f">{config.t_sim}"
    print(f"settling index: {settle_str}, max input: {max_input_inf_norm(result.trajectory):.3f}")
    return 0


def _cmd_reproduce(args, runner) -> int:
    config = _load_config(args)
    result = runner(config, out_dir=args.out)
    table = Path(args.out) / "table.csv"
    print(table.read_text(), end="")
    print(f"artifacts in {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prefmpc", description="Preference-based MPC objective tuning toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_flag=True):
        p.add_argument("--config", help="JSON experiment config file")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--nd", help="comma-separated training-set size sweep")
        p.add_argument("--restarts", type=int, default=None, help="restarts per training")
        if scenario_flag:
            p.add_argument("--scenario", choices=["quadratic", "complex"], default=None)

    p = sub.add_parser("generate-data", help="generate a labeled pair dataset")
    common(p)
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--drop-ties", action="store_true",
                   help="exclude settling-time ties before sampling")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate_data)

    p = sub.add_parser("train", help="train a surrogate on a dataset file")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--test", help="dataset file used for restart selection")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="closed-loop campaign for saved models")
    common(p)
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--sims", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("simulate", help="single closed-loop run for a saved model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--x0", help="comma-separated initial state")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("reproduce-quadratic", help="full quadratic-preference campaign")
    common(p, scenario_flag=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=lambda a: _cmd_reproduce(a, run_quadratic_experiment),
                   scenario="quadratic")

    p = sub.add_parser("reproduce-complex", help="full settling-preference campaign")
    common(p, scenario_flag=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=lambda a: _cmd_reproduce(a, run_complex_experiment),
                   scenario="complex")

    p = sub.add_parser("serve", help="run the labeling/training HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, DatasetFormatError, GenerationError, TrainingError,
            ConvergenceError, FileNotFoundError) as e:
        print(f"error: {e}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
