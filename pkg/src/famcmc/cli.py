"""Command-line entry points: simulate, run, compare, tune.

Examples:
    famcmc simulate --model lg --n-rows 100 --n-cols 10 --n-features 5 \
        --missing-fraction 0.1 --seed 1 --out dataset.json
    famcmc run --dataset dataset.json --sampler dpf --time-budget 10 \
        --out traces_dpf.csv
    famcmc compare --traces gibbs=traces_gibbs.csv --traces dpf=traces_dpf.csv \
        --checkpoints 1,5,10 --out report.json
    famcmc tune --dataset dataset.json --sampler pg --param n_particles \
        --values 2,10,20 --time-budget 5 --out tune.json

The worker-process count for multi-chain runs is read from the environment
variable FAMCMC_WORKERS (default 1).
"""

from __future__ import annotations

import argparse
import json
import sys

from famcmc.harness import (
    ExperimentConfig,
    compare_methods,
    read_traces_csv,
    run_experiment,
    write_traces_csv,
)
from famcmc.simulate import MODELS, SimSpec, simulate
from famcmc.smc import SamplerConfig


def _add_sim_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", choices=MODELS, default="lg")
    parser.add_argument("--prior", choices=("fbb", "ibp"), default="fbb")
    parser.add_argument("--n-rows", type=int, default=100)
    parser.add_argument("--n-cols", type=int, default=10,
                        help="data dimension (lg) or sample count (pyclone)")
    parser.add_argument("--n-features", type=int, default=5)
    parser.add_argument("--a", type=float, default=1.0)
    parser.add_argument("--b", type=float, default=1.0)
    parser.add_argument("--alpha", type=float, default=2.0)
    parser.add_argument("--tau-v", type=float, default=0.25)
    parser.add_argument("--tau-x", type=float, default=25.0)
    parser.add_argument("--tau", type=float, default=0.25)
    parser.add_argument("--missing-fraction", type=float, default=0.0)
    parser.add_argument("--depth", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)


def _spec_from_args(args) -> SimSpec:
    return SimSpec(
        model=args.model,
        prior=args.prior,
        n_rows=args.n_rows,
        n_cols=args.n_cols,
        n_features=args.n_features,
        a=args.a,
        b=args.b,
        alpha=args.alpha,
        tau_v=args.tau_v,
        tau_x=args.tau_x,
        tau=args.tau,
        missing_fraction=args.missing_fraction,
        depth=args.depth,
        seed=args.seed,
    )


def _add_sampler_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--sampler", choices=("gibbs", "row_gibbs", "pg", "dpf"),
                        default="gibbs")
    parser.add_argument("--particles", type=int, default=20)
    parser.add_argument("--resample-threshold", type=float, default=0.5)
    parser.add_argument("--anneal-power", type=float, default=1.0)
    parser.add_argument("--max-particles", type=int, default=20,
                        help="expected particle count for the dpf sampler")
    parser.add_argument("--test-path", default="zeros",
                        choices=("conditional", "ones", "random", "two_stage",
                                 "unconditional", "zeros"))
    parser.add_argument("--time-budget", type=float, default=10.0)
    parser.add_argument("--record-interval", type=float, default=1.0)
    parser.add_argument("--iterations", type=int, default=None,
                        help="iteration budget instead of wall-clock budget")
    parser.add_argument("--n-datasets", type=int, default=1)
    parser.add_argument("--n-inits", type=int, default=1)
    parser.add_argument("--n-restarts", type=int, default=1)
    parser.add_argument("--fixed-theta", action="store_true")
    parser.add_argument("--init-z", choices=("random", "truth"), default="random")


def _sampler_config_from_args(args, **overrides) -> SamplerConfig:
    values = dict(
        n_particles=args.particles,
        resample_threshold=args.resample_threshold,
        anneal_power=args.anneal_power,
        dpf_max_particles=args.max_particles,
        test_path=args.test_path,
    )
    values.update(overrides)
    return SamplerConfig(**values)


def _experiment_config(args, dataset_or_spec, **sampler_overrides) -> ExperimentConfig:
    return ExperimentConfig(
        sim=dataset_or_spec,
        sampler=args.sampler,
        sampler_config=_sampler_config_from_args(args, **sampler_overrides),
        n_datasets=args.n_datasets,
        n_inits=args.n_inits,
        n_restarts=args.n_restarts,
        time_budget_s=args.time_budget,
        record_interval_s=args.record_interval,
        iteration_budget=args.iterations,
        seed=args.seed,
        fixed_theta=args.fixed_theta,
        init_z=args.init_z,
    )


def cmd_simulate(args) -> int:
    dataset = simulate(_spec_from_args(args))
    dataset.to_json(args.out)
    print(f"wrote {args.model} dataset ({args.n_rows} rows) to {args.out}")
    return 0


def cmd_run(args) -> int:
    if args.config:
        config = ExperimentConfig.from_json(args.config)
    else:
        source = args.dataset if args.dataset else _spec_from_args(args)
        config = _experiment_config(args, source)
    result = run_experiment(config)
    if result.failures:
        for idx, err in sorted(result.failures.items()):
            print(f"chain {idx} failed: {err}", file=sys.stderr)
    done = [t for t in result.traces if t is not None]
    write_traces_csv(done, args.out)
    print(f"wrote {len(done)}/{config.n_chains} chain traces to {args.out}")
    return 0 if not result.failures else 1


def cmd_compare(args) -> int:
    traces_by_method = {}
    for item in args.traces:
        if "=" not in item:
            print(f"--traces expects NAME=PATH, got {item!r}", file=sys.stderr)
            return 2
        name, path = item.split("=", 1)
        traces_by_method[name] = read_traces_csv(path)
    checkpoints = [float(x) for x in args.checkpoints.split(",")]
    report = compare_methods(traces_by_method, checkpoints, metric=args.metric)
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
    print(f"wrote comparison report to {args.out}")
    return 0


TUNABLE = ("n_particles", "resample_threshold", "anneal_power",
           "dpf_max_particles", "test_path")


def cmd_tune(args) -> int:
    source = args.dataset if args.dataset else _spec_from_args(args)
    values = args.values.split(",")
    field_type = str if args.param == "test_path" else (
        int if args.param in ("n_particles", "dpf_max_particles") else float
    )
    traces_by_value = {}
    for raw in values:
        value = field_type(raw)
        config = _experiment_config(args, source, **{args.param: value})
        result = run_experiment(config)
        traces_by_value[str(raw)] = [t for t in result.traces if t is not None]
        print(f"{args.param}={raw}: {len(traces_by_value[str(raw)])} chains done")
    checkpoints = [float(x) for x in args.checkpoints.split(",")]
    report = compare_methods(traces_by_value, checkpoints, metric=args.metric)
    report["tuned_parameter"] = args.param
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
    print(f"wrote tuning report to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="famcmc",
        description="Samplers and benchmarks for Bayesian feature allocation models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset JSON")
    _add_sim_arguments(p_sim)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_run = sub.add_parser("run", help="run chains and write a trace CSV")
    _add_sim_arguments(p_run)
    _add_sampler_arguments(p_run)
    p_run.add_argument("--dataset", default=None, help="dataset JSON path "
                       "(overrides the simulation flags)")
    p_run.add_argument("--config", default=None, help="experiment config JSON "
                       "(overrides every other flag)")
    p_run.add_argument("--out", required=True)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="Friedman/Nemenyi report from traces")
    p_cmp.add_argument("--traces", action="append", required=True,
                       metavar="NAME=PATH")
    p_cmp.add_argument("--checkpoints", required=True,
                       help="comma-separated times in seconds")
    p_cmp.add_argument("--metric", default="rel_log_density",
                       choices=("rel_log_density", "model_metric_value"))
    p_cmp.add_argument("--out", required=True)
    p_cmp.set_defaults(func=cmd_compare)

    p_tune = sub.add_parser("tune", help="sweep one sampler tuning parameter")
    _add_sim_arguments(p_tune)
    _add_sampler_arguments(p_tune)
    p_tune.add_argument("--dataset", default=None)
    p_tune.add_argument("--param", choices=TUNABLE, required=True)
    p_tune.add_argument("--values", required=True, help="comma-separated values")
    p_tune.add_argument("--checkpoints", default="1,5,10")
    p_tune.add_argument("--metric", default="rel_log_density",
                        choices=("rel_log_density", "model_metric_value"))
    p_tune.add_argument("--out", required=True)
    p_tune.set_defaults(func=cmd_tune)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
