"""Experiment runner: wall-clock-budgeted chains, traces, and comparisons.

A chain is one MCMC run on one dataset.  The budget clock counts kernel time
only: metric snapshots are computed between sweeps, outside the timed
region, so that methods with expensive diagnostics are not penalized.
Chains are fully reproducible: per-chain random streams are derived from the
master seed and the chain's grid coordinates, never from the method, so that
every method sees the same datasets and initializations.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from famcmc.allocation import ContractError, FeatureAllocationMatrix
from famcmc.metrics import (
    MetricPoint,
    bcubed_fmeasure,
    friedman_test,
    lfrm_reconstruction_error,
    nemenyi_posthoc,
    relative_log_density,
    rmse_heldout,
)
from famcmc.models import (
    LinearGaussianModel,
    PycloneModel,
    RelationalModel,
    update_alpha,
)
from famcmc.models.base import gamma_logpdf
from famcmc.priors import BetaBernoulliPrior, IndianBuffetPrior
from famcmc.samplers import (
    dpf_row,
    element_wise_gibbs_row,
    particle_gibbs_row,
    row_wise_gibbs_row,
    update_singletons_collapsed_lg,
    update_singletons_mh,
)
from famcmc.simulate import Dataset, SimSpec, draw_ibp_allocation, simulate
from famcmc.smc import SamplerConfig

SAMPLERS = ("gibbs", "row_gibbs", "pg", "dpf")
SIGNIFICANCE_LEVEL = 0.001

TRACE_COLUMNS = (
    "chain_id",
    "iteration",
    "wall_clock_s",
    "log_joint",
    "rel_log_density",
    "model_metric_name",
    "model_metric_value",
)


@dataclass
class ExperimentConfig:
    sim: SimSpec | str
    sampler: str = "gibbs"
    sampler_config: SamplerConfig = field(default_factory=SamplerConfig)
    n_datasets: int = 4
    n_inits: int = 4
    n_restarts: int = 5
    time_budget_s: float = 10.0
    record_interval_s: float = 1.0
    iteration_budget: int | None = None
    seed: int = 0
    fixed_theta: bool = False
    init_z: str = "random"  # "random" | "truth"
    fit_prior: dict | None = None  # override the dataset's generating prior

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ContractError(f"unknown sampler {self.sampler!r}")
        if self.time_budget_s <= 0 or self.record_interval_s <= 0:
            raise ContractError("budgets must be positive")
        if self.init_z not in ("random", "truth"):
            raise ContractError("init_z must be 'random' or 'truth'")
        if min(self.n_datasets, self.n_inits, self.n_restarts) < 1:
            raise ContractError("grid counts must be positive")

    @property
    def n_chains(self) -> int:
        return self.n_datasets * self.n_inits * self.n_restarts

    def to_json_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        if isinstance(self.sim, SimSpec):
            doc["sim"] = dataclasses.asdict(self.sim)
        doc["sampler_config"] = {
            **dataclasses.asdict(self.sampler_config),
            "test_path": self.sampler_config.test_path.value,
        }
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if isinstance(doc.get("sim"), dict):
            doc["sim"] = SimSpec(**doc["sim"])
        if isinstance(doc.get("sampler_config"), dict):
            doc["sampler_config"] = SamplerConfig(**doc["sampler_config"])
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)


@dataclass
class Trace:
    chain_id: int
    points: list[MetricPoint]
    final_allocation: np.ndarray | None = None

    def value_at(self, when: float, attr: str = "rel_log_density") -> float | None:
        """Last recorded value at or before ``when``; None beyond the trace."""
        best = None
        for pt in self.points:
            if pt.wall_clock_s <= when:
                best = getattr(pt, attr)
            else:
                break
        return best


@dataclass
class ExperimentResult:
    traces: list
    failures: dict


def _seed_for(master: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master, spawn_key=tuple(key))


def _grid_coords(config: ExperimentConfig, chain_index: int) -> tuple[int, int, int]:
    per_dataset = config.n_inits * config.n_restarts
    d = chain_index // per_dataset
    i = (chain_index % per_dataset) // config.n_restarts
    r = chain_index % config.n_restarts
    return d, i, r


def load_or_simulate(config: ExperimentConfig, dataset_index: int) -> Dataset:
    if isinstance(config.sim, str):
        return Dataset.from_json(config.sim)
    seed = int(_seed_for(config.seed, 0, dataset_index).generate_state(1)[0])
    return simulate(replace(config.sim, seed=seed))


def build_prior(dataset: Dataset, override: dict | None):
    if override is not None:
        if override["kind"] == "fbb":
            return BetaBernoulliPrior(
                override["n_features"], override.get("a", 1.0), override.get("b", 1.0)
            )
        return IndianBuffetPrior(override.get("alpha", 1.0))
    sim = dataset.sim or {}
    if dataset.prior == "fbb":
        return BetaBernoulliPrior(
            int(sim.get("n_features", np.asarray(dataset.truth["z"]).shape[1])),
            float(sim.get("a", 1.0)),
            float(sim.get("b", 1.0)),
        )
    return IndianBuffetPrior(float(sim.get("alpha", 1.0)))


def build_model(dataset: Dataset, prior, rng, fixed_theta: bool):
    """Model instance with parameters drawn from the priors (or pinned to the
    generating truth in fixed-theta mode), plus the initial feature count."""
    sim = dataset.sim or {}
    truth = dataset.truth
    if dataset.model == "lg":
        x = np.asarray(dataset.data["x"], dtype=float)
        d = x.shape[1]
        if fixed_theta:
            v = np.asarray(truth["params"]["V"], dtype=float)
            tau_v = float(truth["params"]["tau_v"])
            tau_x = float(truth["params"]["tau_x"])
            return LinearGaussianModel(x, v, tau_v=tau_v, tau_x=tau_x)
        k = _init_feature_count(prior, truth)
        tau_v = float(rng.gamma(1.0, 1.0))
        tau_x = float(rng.gamma(1.0, 1.0))
        v = rng.normal(size=(k, d)) / np.sqrt(tau_v)
        return LinearGaussianModel(x, v, tau_v=tau_v, tau_x=tau_x)
    if dataset.model == "lfrm":
        x = np.asarray(dataset.data["x"], dtype=float)
        symmetric = bool(sim.get("symmetric", False))
        if fixed_theta:
            w = np.asarray(truth["params"]["W"], dtype=float)
            return RelationalModel(x, w, tau=float(truth["params"]["tau"]), symmetric=symmetric)
        k = _init_feature_count(prior, truth)
        tau = float(rng.gamma(1.0, 1.0))
        w = rng.normal(size=(k, k)) / np.sqrt(tau)
        if symmetric:
            w = np.triu(w) + np.triu(w, 1).T
        return RelationalModel(x, w, tau=tau, symmetric=symmetric)
    b = np.asarray(dataset.data["b"], dtype=np.int64)
    d_counts = np.asarray(dataset.data["d"], dtype=np.int64)
    a_v = float(sim.get("a_v", 1.0))
    b_v = float(sim.get("b_v", 1.0))
    if fixed_theta:
        v = np.asarray(truth["params"]["v"], dtype=float)
    else:
        k = _init_feature_count(prior, truth)
        v = rng.gamma(a_v, 1.0 / b_v, size=(k, b.shape[1]))
    return PycloneModel(
        b,
        d_counts,
        v,
        error_rate=float(sim.get("error_rate", 0.01)),
        het_vaf=float(sim.get("het_vaf", 0.5)),
        a_v=a_v,
        b_v=b_v,
    )


def _init_feature_count(prior, truth) -> int:
    if isinstance(prior, BetaBernoulliPrior):
        return prior.n_features
    return max(1, np.asarray(truth["z"]).shape[1])


def init_allocation(dataset: Dataset, prior, rng, mode: str) -> FeatureAllocationMatrix:
    truth_z = np.asarray(dataset.truth["z"], dtype=np.int8)
    if mode == "truth":
        return FeatureAllocationMatrix(truth_z)
    n = truth_z.shape[0]
    if isinstance(prior, BetaBernoulliPrior):
        bits = (rng.uniform(size=(n, prior.n_features)) < 0.5).astype(np.int8)
        return FeatureAllocationMatrix(bits)
    return draw_ibp_allocation(n, prior.alpha, rng)


_KERNELS = {
    "gibbs": lambda n, Z, model, prior, cfg, rng: element_wise_gibbs_row(
        n, Z, model, prior, rng
    ),
    "row_gibbs": lambda n, Z, model, prior, cfg, rng: row_wise_gibbs_row(
        n, Z, model, prior, rng, max_features=cfg.row_gibbs_max_features
    ),
    "pg": lambda n, Z, model, prior, cfg, rng: particle_gibbs_row(
        n, Z, model, prior, cfg, rng
    ),
    "dpf": lambda n, Z, model, prior, cfg, rng: dpf_row(n, Z, model, prior, cfg, rng),
}


def sweep(sampler, Z, model, prior, cfg, rng, update_theta=True):
    """One full pass: row updates in random order (plus singleton moves under
    the IBP), then the model parameter kernels and the mass-parameter kernel.
    Returns the (possibly updated) prior."""
    kernel = _KERNELS[sampler]
    ibp = isinstance(prior, IndianBuffetPrior)
    for n in rng.permutation(Z.n_rows):
        n = int(n)
        Z.set_row(n, kernel(n, Z, model, prior, cfg, rng))
        if ibp:
            if isinstance(model, LinearGaussianModel):
                update_singletons_collapsed_lg(n, Z, model, prior, rng)
            else:
                update_singletons_mh(n, Z, model, prior, rng)
            removed = Z.prune_empty_columns()
            if removed.size:
                model.remove_features(removed)
    if update_theta:
        model.update_params(Z, rng)
        if ibp:
            prior = update_alpha(prior, Z, rng)
    return prior


def log_joint(Z, model, prior) -> float:
    lj = prior.log_pmf(Z) + model.log_prior_params() + model.log_lik_total(Z)
    if isinstance(prior, IndianBuffetPrior):
        lj += float(gamma_logpdf(prior.alpha, 1.0, 1.0))
    return float(lj)


def _model_metric(dataset: Dataset, model, Z) -> tuple[str, float]:
    if dataset.model == "lg":
        if not dataset.heldout:
            return "rmse", float("nan")
        recon = model.reconstruct(Z)
        rows = np.asarray(dataset.heldout["rows"], dtype=int)
        cols = np.asarray(dataset.heldout["cols"], dtype=int)
        values = np.asarray(dataset.heldout["values"], dtype=float)
        return "rmse", rmse_heldout(recon[rows, cols], values)
    if dataset.model == "lfrm":
        x_full = np.asarray(dataset.data["x"], dtype=float).copy()
        if dataset.heldout:
            rows = np.asarray(dataset.heldout["rows"], dtype=int)
            cols = np.asarray(dataset.heldout["cols"], dtype=int)
            x_full[rows, cols] = np.asarray(dataset.heldout["values"], dtype=float)
        return "reconstruction_error", lfrm_reconstruction_error(
            model.edge_probs(Z), x_full
        )
    _, _, f = bcubed_fmeasure(Z.bits, np.asarray(dataset.truth["z"], dtype=np.int64))
    return "bcubed_f", f


def run_chain(config: ExperimentConfig, chain_index: int) -> Trace:
    """Run one chain to its budget, recording metric snapshots off the clock."""
    d_idx, i_idx, _ = _grid_coords(config, chain_index)
    dataset = load_or_simulate(config, d_idx)
    prior = build_prior(dataset, config.fit_prior)
    if dataset.model == "pyclone" and isinstance(prior, IndianBuffetPrior):
        raise ContractError("the count-mixture model cannot be fit with the IBP prior")

    init_rng = np.random.default_rng(_seed_for(config.seed, 1, d_idx, i_idx))
    model = build_model(dataset, prior, init_rng, config.fixed_theta)
    Z = init_allocation(dataset, prior, init_rng, config.init_z)
    if isinstance(prior, IndianBuffetPrior):
        mismatch = model.n_features - Z.n_cols
        if mismatch > 0:
            model.remove_features(np.arange(Z.n_cols, model.n_features))
        elif mismatch < 0:
            model.add_features(-mismatch, init_rng)

    rng = np.random.default_rng(_seed_for(config.seed, 2, chain_index))
    ell_hat = float(dataset.truth["log_density"])
    points: list[MetricPoint] = []

    def record(elapsed: float, iteration: int):
        name, value = _model_metric(dataset, model, Z)
        points.append(
            MetricPoint(
                wall_clock_s=elapsed,
                iteration=iteration,
                log_joint=log_joint(Z, model, prior),
                rel_log_density=relative_log_density(model.log_lik_total(Z), ell_hat),
                model_metric_name=name,
                model_metric_value=value,
            )
        )

    record(0.0, 0)
    elapsed = 0.0
    iteration = 0
    next_record = config.record_interval_s
    while True:
        if config.iteration_budget is not None:
            if iteration >= config.iteration_budget:
                break
        elif elapsed >= config.time_budget_s:
            break
        start = time.perf_counter()
        prior = sweep(
            config.sampler, Z, model, prior, config.sampler_config, rng,
            update_theta=not config.fixed_theta,
        )
        elapsed += time.perf_counter() - start
        iteration += 1
        if config.iteration_budget is not None:
            record(elapsed, iteration)
        elif elapsed >= next_record:
            record(elapsed, iteration)
            next_record = elapsed + config.record_interval_s
    return Trace(chain_id=chain_index, points=points, final_allocation=Z.bits.copy())


def _run_chain_worker(args):
    config, chain_index = args
    return chain_index, run_chain(config, chain_index)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run the full grid; chains are independent and individually seeded.
    Worker-process count comes from FAMCMC_WORKERS (default 1)."""
    n = config.n_chains
    traces: list = [None] * n
    failures: dict = {}
    workers = int(os.environ.get("FAMCMC_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, trace in pool.map(
                _run_chain_worker, [(config, i) for i in range(n)]
            ):
                traces[idx] = trace
    else:
        for i in range(n):
            try:
                traces[i] = run_chain(config, i)
            except Exception as exc:  # partial results preserved
                failures[i] = repr(exc)
    return ExperimentResult(traces=traces, failures=failures)


# --------------------------------------------------------------------------- #
# trace serialization (CSV round-trips losslessly)


def write_traces_csv(traces, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for trace in traces:
            if trace is None:
                continue
            for pt in trace.points:
                writer.writerow(
                    [
                        trace.chain_id,
                        pt.iteration,
                        repr(pt.wall_clock_s),
                        repr(pt.log_joint),
                        repr(pt.rel_log_density),
                        pt.model_metric_name,
                        repr(pt.model_metric_value),
                    ]
                )


def read_traces_csv(path) -> list[Trace]:
    by_chain: dict[int, list[MetricPoint]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ContractError(f"unexpected trace columns {header}")
        for row in reader:
            chain_id = int(row[0])
            by_chain.setdefault(chain_id, []).append(
                MetricPoint(
                    iteration=int(row[1]),
                    wall_clock_s=float(row[2]),
                    log_joint=float(row[3]),
                    rel_log_density=float(row[4]),
                    model_metric_name=row[5],
                    model_metric_value=float(row[6]),
                )
            )
    return [
        Trace(chain_id=cid, points=pts) for cid, pts in sorted(by_chain.items())
    ]


# --------------------------------------------------------------------------- #
# method comparison


def compare_methods(
    traces_by_method: dict,
    checkpoints,
    metric: str = "rel_log_density",
    alpha: float = SIGNIFICANCE_LEVEL,
) -> dict:
    """Friedman-then-Nemenyi comparison at each checkpoint.

    Values are carried forward within each trace and never extrapolated past
    its last record; chains missing a checkpoint are dropped from that
    checkpoint's blocks (and reported as absent).
    """
    methods = sorted(traces_by_method)
    report = {"metric": metric, "alpha": alpha, "methods": methods, "checkpoints": []}
    for when in checkpoints:
        values = {}
        for name in methods:
            values[name] = {
                tr.chain_id: tr.value_at(when, metric)
                for tr in traces_by_method[name]
                if tr is not None
            }
        common = sorted(
            set.intersection(
                *[
                    {cid for cid, v in values[name].items() if v is not None}
                    for name in methods
                ]
            )
        )
        entry = {
            "time": when,
            "n_blocks": len(common),
            "absent": {
                name: sorted(
                    cid for cid, v in values[name].items() if v is None
                )
                for name in methods
            },
            "per_method": {},
        }
        if len(common) >= 2 and len(methods) >= 2:
            table = np.array(
                [[values[name][cid] for cid in common] for name in methods]
            )
            stat, p = friedman_test(table)
            entry["friedman"] = {"statistic": stat, "p": p}
            if p < alpha:
                pvals = nemenyi_posthoc(table)
                entry["nemenyi"] = [
                    {
                        "method_i": methods[i],
                        "method_j": methods[j],
                        "p": float(pvals[i, j]),
                    }
                    for i in range(len(methods))
                    for j in range(i + 1, len(methods))
                ]
            else:
                entry["nemenyi"] = None
            for i, name in enumerate(methods):
                qs = np.quantile(table[i], [0.05, 0.25, 0.5, 0.75, 0.95])
                entry["per_method"][name] = {
                    "quantiles": {
                        "q05": float(qs[0]),
                        "q25": float(qs[1]),
                        "q50": float(qs[2]),
                        "q75": float(qs[3]),
                        "q95": float(qs[4]),
                    }
                }
        report["checkpoints"].append(entry)
    return report
