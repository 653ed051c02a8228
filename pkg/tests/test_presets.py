import pytest

from famcmc.allocation import ContractError
from famcmc.harness import run_chain
from famcmc.presets import PRESETS, preset


def test_all_presets_build():
    for name in PRESETS:
        cfg = preset(name, sampler="dpf")
        assert cfg.n_chains == 80
        assert cfg.time_budget_s == 1000.0
        assert cfg.sampler == "dpf"


def test_grid_and_scaling():
    cfg = preset("lg_fbb_k5")
    assert cfg.sim.n_rows == 100
    assert cfg.sim.missing_fraction == 0.1
    cfg = preset("lfrm_fbb_k20")
    assert cfg.sim.n_rows == 10
    assert cfg.sim.missing_fraction == 0.05
    cfg = preset("pyclone_d10_k12")
    assert cfg.sim.n_rows == 20
    assert cfg.sim.n_cols == 10
    assert cfg.sim.n_features == 12


def test_ibp_fit_variants():
    cfg = preset("lg_ibp_k20")
    assert cfg.fit_prior == {"kind": "ibp", "alpha": 2.0}
    assert cfg.sim.prior == "fbb"  # data still simulated from the FBB


def test_overrides():
    cfg = preset("lg_fbb_k5", sampler="pg", n_restarts=1, time_budget_s=0.5)
    assert cfg.n_restarts == 1
    assert cfg.time_budget_s == 0.5


def test_unknown_preset():
    with pytest.raises(ContractError):
        preset("nope")


def test_smoke_run_one_chain():
    cfg = preset("lg_fbb_k5", sampler="dpf", iteration_budget=2,
                 n_datasets=1, n_inits=1, n_restarts=1)
    trace = run_chain(cfg, 0)
    assert len(trace.points) == 3
