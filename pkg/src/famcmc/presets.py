"""Desk-scale benchmark presets.

Scaled copies of the published comparison experiments with data sizes and
wall-clock budgets reduced tenfold, keeping the 4 x 4 x 5 = 80-chain grid and
the default tuning values (20 particles, resampling threshold 0.5, annealing
power 1.0, zeros test path).  Pass a sampler name to get a ready-to-run
configuration; everything is an ordinary ``ExperimentConfig`` and can be
overridden field by field.
"""

from __future__ import annotations

from dataclasses import replace

from famcmc.allocation import ContractError
from famcmc.harness import ExperimentConfig
from famcmc.simulate import SimSpec
from famcmc.smc import SamplerConfig

FULL_SCALE_BUDGET_S = 10_000.0
SCALE = 10.0


def _base(sim: SimSpec, fit_prior: dict | None = None) -> ExperimentConfig:
    return ExperimentConfig(
        sim=sim,
        sampler="gibbs",
        sampler_config=SamplerConfig(),
        n_datasets=4,
        n_inits=4,
        n_restarts=5,
        time_budget_s=FULL_SCALE_BUDGET_S / SCALE,
        record_interval_s=1.0,
        fit_prior=fit_prior,
    )


def _lg(n_features: int, fit_ibp: bool = False) -> ExperimentConfig:
    sim = SimSpec(
        model="lg", prior="fbb", n_rows=1000 // int(SCALE), n_cols=10,
        n_features=n_features, alpha=2.0, tau_v=0.25, tau_x=25.0,
        missing_fraction=0.1,
    )
    fit = {"kind": "ibp", "alpha": 2.0} if fit_ibp else None
    return _base(sim, fit)


def _lfrm(n_features: int, fit_ibp: bool = False) -> ExperimentConfig:
    sim = SimSpec(
        model="lfrm", prior="fbb", n_rows=100 // int(SCALE),
        n_features=n_features, alpha=2.0, tau=0.25, symmetric=False,
        missing_fraction=0.05,
    )
    fit = {"kind": "ibp", "alpha": 2.0} if fit_ibp else None
    return _base(sim, fit)


def _pyclone(n_samples: int, n_features: int) -> ExperimentConfig:
    sim = SimSpec(
        model="pyclone", prior="fbb", n_rows=200 // int(SCALE),
        n_cols=n_samples, n_features=n_features, alpha=2.0, a_v=1.0, b_v=1.0,
    )
    return _base(sim)


PRESETS = {
    "lg_fbb_k5": lambda: _lg(5),
    "lg_fbb_k20": lambda: _lg(20),
    "lg_ibp_k20": lambda: _lg(20, fit_ibp=True),
    "lfrm_fbb_k5": lambda: _lfrm(5),
    "lfrm_fbb_k20": lambda: _lfrm(20),
    "lfrm_ibp_k20": lambda: _lfrm(20, fit_ibp=True),
    "pyclone_d4_k4": lambda: _pyclone(4, 4),
    "pyclone_d10_k8": lambda: _pyclone(10, 8),
    "pyclone_d10_k12": lambda: _pyclone(10, 12),
}


def preset(name: str, sampler: str = "gibbs", **overrides) -> ExperimentConfig:
    """A named benchmark configuration with optional field overrides."""
    if name not in PRESETS:
        raise ContractError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    config = replace(PRESETS[name](), sampler=sampler)
    return replace(config, **overrides) if overrides else config
