"""Shared density helpers and the feature-count hyper-parameter kernel."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from famcmc.allocation import FeatureAllocationMatrix
from famcmc.priors import IndianBuffetPrior

LOG_2PI = math.log(2.0 * math.pi)


def normal_logpdf(x, mean, precision):
    """Normal log density in the mean/precision parametrization."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * (np.log(precision) - LOG_2PI) - 0.5 * precision * (x - mean) ** 2


def gamma_logpdf(x, shape, rate):
    """Gamma log density in the shape/rate parametrization."""
    x = np.asarray(x, dtype=np.float64)
    return shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x


def log_sigmoid(logits):
    """log sigma(l), numerically stable."""
    return -np.logaddexp(0.0, -np.asarray(logits, dtype=np.float64))


def bernoulli_logit_logpmf(x, logits):
    """log Bernoulli(x | sigma(logit)) = x*l - log(1 + e^l)."""
    logits = np.asarray(logits, dtype=np.float64)
    return np.asarray(x, dtype=np.float64) * logits - np.logaddexp(0.0, logits)


def logscale_rw_step(value: float, log_target, step: float, rng) -> tuple[float, bool]:
    """One random-walk MH move on log(value) with the change-of-variables
    Jacobian included.  ``log_target`` evaluates the target density of the
    value itself.  Returns (new_value, accepted)."""
    prop = value * math.exp(step * rng.normal())
    log_ratio = log_target(prop) - log_target(value) + math.log(prop) - math.log(value)
    if math.log(rng.uniform()) < log_ratio:
        return prop, True
    return value, False


def update_alpha(
    prior: IndianBuffetPrior,
    fa: FeatureAllocationMatrix,
    rng,
    step: float = 0.5,
    prior_shape: float = 1.0,
    prior_rate: float = 1.0,
) -> IndianBuffetPrior:
    """Random-walk MH update of the IBP mass parameter on the log scale.

    The target is Gamma(alpha | shape, rate) times the allocation pmf, whose
    alpha-dependence is alpha^{K_N}; for an empty allocation the target is the
    prior alone.
    """
    k_n = fa.n_cols
    alpha = prior.alpha
    prop = alpha * math.exp(step * rng.normal())
    log_ratio = (prior_shape + k_n) * (math.log(prop) - math.log(alpha)) - prior_rate * (
        prop - alpha
    )
    if math.log(rng.uniform()) < log_ratio:
        return IndianBuffetPrior(prop)
    return prior
