"""Row-wise MCMC kernels and a benchmark harness for Bayesian feature allocation models."""

from famcmc.allocation import (
    FeatureAllocationMatrix,
    Permutation,
    complete_row,
    left_order_form,
)
from famcmc.models import (
    LinearGaussianModel,
    PycloneModel,
    RelationalModel,
    update_alpha,
)
from famcmc.priors import BetaBernoulliPrior, IndianBuffetPrior
from famcmc.samplers import (
    dpf_row,
    element_wise_gibbs_row,
    particle_gibbs_row,
    row_wise_gibbs_row,
)
from famcmc.smc import SamplerConfig, TestPathStrategy

__version__ = "0.1.0"

__all__ = [
    "FeatureAllocationMatrix",
    "Permutation",
    "complete_row",
    "left_order_form",
    "BetaBernoulliPrior",
    "IndianBuffetPrior",
    "LinearGaussianModel",
    "RelationalModel",
    "PycloneModel",
    "update_alpha",
    "element_wise_gibbs_row",
    "row_wise_gibbs_row",
    "particle_gibbs_row",
    "dpf_row",
    "SamplerConfig",
    "TestPathStrategy",
]
