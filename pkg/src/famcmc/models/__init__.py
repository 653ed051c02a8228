from famcmc.models.base import update_alpha
from famcmc.models.linear_gaussian import LinearGaussianModel
from famcmc.models.pyclone import PycloneModel, cellular_prevalence
from famcmc.models.relational import RelationalModel

__all__ = [
    "LinearGaussianModel",
    "RelationalModel",
    "PycloneModel",
    "cellular_prevalence",
    "update_alpha",
]
