"""Row-update kernels for feature allocation matrices.

Four kernels target the same row conditional
p(z_n | x_n, Z^(-n), theta) ∝ p(x_n | z_n, theta) * prod_k Bernoulli(z_nk | rho_nk):

  * element_wise_gibbs_row — one bit at a time, O(K) likelihood evaluations;
  * row_wise_gibbs_row     — exact draw by full 2^K enumeration;
  * particle_gibbs_row     — conditional SMC with a fully adapted proposal,
                             adaptive multinomial resampling, O(K) likelihoods;
  * dpf_row                — enumerative particle filter with optimal
                             stochastic pruning to an expected M particles.

Under the IBP prior the kernels update only columns shared with other rows;
the row's singleton columns are pinned to one during likelihood evaluation
and handled by the separate Metropolis-Hastings moves at the bottom of this
module.  A fresh uniformly random feature order is drawn for every update
unless a permutation is supplied.
"""

from __future__ import annotations

import math

import numpy as np

from famcmc.allocation import ContractError, FeatureAllocationMatrix, Permutation
from famcmc.models.linear_gaussian import LinearGaussianModel
from famcmc.priors import BetaBernoulliPrior, IndianBuffetPrior
from famcmc.smc import (
    DegenerateSupportError,
    ParticleSystem,
    RowTarget,
    SamplerConfig,
    SmcDiagnostics,
    TestPathStrategy,
    conditional_multinomial_resample,
    log_sum_exp,
    relative_ess,
    resample_dpf,
)


class RowGibbsCapacityError(RuntimeError):
    """Row enumeration would exceed the configured feature limit."""


def _categorical(weights: np.ndarray, rng) -> int:
    cum = np.cumsum(weights)
    cum[-1] = max(cum[-1], 1.0)
    return int(np.searchsorted(cum, rng.uniform(), side="right"))


def _active_columns(n: int, Z: FeatureAllocationMatrix, prior):
    """Columns updated by the row kernels, plus the pinned row template.

    Finite prior: every column is active and the template is all zeros.
    IBP: columns with m_k^(-n) > 0 are active; the row's singletons stay
    pinned to one in the template.
    """
    if isinstance(prior, BetaBernoulliPrior):
        active = np.arange(Z.n_cols)
        base = np.zeros(Z.n_cols, dtype=np.int8)
        return active, base
    counts_excl = Z.col_counts_excluding(n)
    active = np.flatnonzero(counts_excl > 0)
    base = np.zeros(Z.n_cols, dtype=np.int8)
    singles = np.flatnonzero((counts_excl == 0) & (Z.bits[n] == 1))
    base[singles] = 1
    return active, base


def _row_rho(n: int, Z: FeatureAllocationMatrix, prior, active) -> np.ndarray:
    counts_excl = Z.col_counts_excluding(n)[active]
    return prior.predictive_probs(counts_excl, Z.n_rows - 1)


# --------------------------------------------------------------------------- #
# element-wise and row-wise Gibbs


def element_wise_gibbs_row(
    n: int,
    Z: FeatureAllocationMatrix,
    model,
    prior,
    rng,
    perm: Permutation | None = None,
) -> np.ndarray:
    """Resample each updatable bit of row n from its full conditional, in a
    random feature order; exactly two likelihood evaluations per column."""
    active, base = _active_columns(n, Z, prior)
    row = Z.row(n)
    if active.size == 0:
        return row
    if perm is None:
        perm = Permutation.random(active.size, rng)
    rho = _row_rho(n, Z, prior, active)
    cand = np.empty((2, Z.n_cols), dtype=np.int8)
    for s in perm.forward:
        k = active[s]
        cand[0] = row
        cand[1] = row
        cand[0, k] = 0
        cand[1, k] = 1
        ll = model.log_lik_rows(n, cand, Z)
        lp0 = math.log1p(-rho[s]) + ll[0]
        lp1 = math.log(rho[s]) + ll[1]
        norm = np.logaddexp(lp0, lp1)
        if np.isneginf(norm):
            raise DegenerateSupportError(f"zero mass for both values of bit {k}")
        row[k] = 1 if rng.uniform() < math.exp(lp1 - norm) else 0
    return row


def row_wise_gibbs_row(
    n: int,
    Z: FeatureAllocationMatrix,
    model,
    prior,
    rng,
    max_features: int = 25,
    _chunk: int = 1 << 16,
) -> np.ndarray:
    """Exact draw from the row conditional by enumerating all 2^T updatable
    bit patterns.  Memory and time grow as 2^T; beyond ``max_features``
    columns a capacity error points the caller at the SMC kernels."""
    active, base = _active_columns(n, Z, prior)
    t = active.size
    row = Z.row(n)
    if t == 0:
        return row
    if t > max_features:
        raise RowGibbsCapacityError(
            f"row enumeration over {t} features exceeds the limit of "
            f"{max_features}; use the particle Gibbs or discrete particle "
            "filter kernels instead"
        )
    rho = _row_rho(n, Z, prior, active)
    log_rho = np.log(rho)
    log_1m_rho = np.log1p(-rho)
    total = 1 << t
    log_p = np.empty(total)
    shifts = np.arange(t, dtype=np.uint32)
    for lo in range(0, total, _chunk):
        hi = min(lo + _chunk, total)
        codes = np.arange(lo, hi, dtype=np.uint32)
        bits = ((codes[:, None] >> shifts) & 1).astype(np.int8)
        rows = np.repeat(base[None, :], hi - lo, axis=0)
        rows[:, active] = bits
        ll = model.log_lik_rows(n, rows, Z)
        prior_part = bits @ log_rho + (1 - bits) @ log_1m_rho
        log_p[lo:hi] = ll + prior_part
    log_p -= log_sum_exp(log_p)
    idx = _categorical(np.exp(log_p), rng)
    out = base.copy()
    out[active] = (idx >> shifts) & 1
    return out


# --------------------------------------------------------------------------- #
# conditional SMC engine (particle Gibbs)


def _smc_pass(
    target: RowTarget,
    n_particles: int,
    threshold: float,
    rng,
    conditional_bits: np.ndarray | None = None,
    diag: SmcDiagnostics | None = None,
) -> ParticleSystem:
    """One (conditional) SMC pass; returns the final particle system.

    With ``conditional_bits`` given, slot 0 is pinned to that path at every
    step and resampling keeps it; otherwise the pass is a plain unconditional
    SMC sampler with multinomial resampling.
    """
    n_steps = target.n_steps
    p = n_particles
    conditional = conditional_bits is not None

    g0, g1 = target.extension_log_densities(np.zeros((1, 0), dtype=np.int8))
    pair = np.array([g0[0], g1[0]])
    pair_norm = log_sum_exp(pair)
    if np.isneginf(pair_norm):
        raise DegenerateSupportError("zero mass for both values of the first bit")
    p1 = math.exp(pair[1] - pair_norm)
    bits = (rng.uniform(size=p) < p1).astype(np.int8)
    if conditional:
        bits[0] = conditional_bits[0]
    prefixes = bits[:, None].copy()
    cached = pair[bits]
    prior_cum = np.where(bits == 1, target.log_rho[0], target.log_1m_rho[0])
    # the fully adapted first weight is the shared normalizer: uniform weights
    log_lambda = np.full(p, pair_norm)
    log_norm_w = np.full(p, -math.log(p))
    ancestors = np.arange(p)
    if diag is not None:
        diag.n_steps = n_steps
        diag.raw_log_weights.append(np.full(p, pair_norm))

    for t in range(2, n_steps + 1):
        w = np.exp(log_norm_w)
        if relative_ess(w) < threshold:
            if conditional:
                ancestors = conditional_multinomial_resample(w, p, rng)
            else:
                cum = np.cumsum(w)
                cum[-1] = 1.0
                ancestors = np.searchsorted(cum, rng.uniform(size=p), side="right")
            prefixes = prefixes[ancestors]
            cached = cached[ancestors]
            prior_cum = prior_cum[ancestors]
            log_carry = np.zeros(p)  # incremental weights reset to one
            if diag is not None:
                diag.n_resample_events += 1
        else:
            ancestors = np.arange(p)
            log_carry = log_norm_w
        g0, g1 = target.extension_log_densities(prefixes, prior_prefix=prior_cum)
        pair_norms = np.logaddexp(g0, g1)
        if np.isneginf(pair_norms).any():
            bad = prefixes[int(np.flatnonzero(np.isneginf(pair_norms))[0])]
            raise DegenerateSupportError(
                f"zero mass for both extensions of prefix {bad.tolist()} at step {t}"
            )
        p1s = np.exp(g1 - pair_norms)
        bits = (rng.uniform(size=p) < p1s).astype(np.int8)
        if conditional:
            bits[0] = conditional_bits[t - 1]
        log_incr = pair_norms - cached
        log_lambda = log_carry + log_incr
        log_norm_w = log_lambda - log_sum_exp(log_lambda)
        one = bits == 1
        cached = np.where(one, g1, g0)
        prior_cum = prior_cum + np.where(
            one, target.log_rho[t - 1], target.log_1m_rho[t - 1]
        )
        prefixes = np.hstack([prefixes, bits[:, None]])
        # slot 0 stays pinned to the conditional path (resampling keeps index
        # 0 and the proposal step writes the conditional bit back)
        assert not conditional or prefixes[0, t - 1] == conditional_bits[t - 1]
        if diag is not None:
            diag.raw_log_weights.append(log_incr.copy())

    return ParticleSystem(
        prefixes=prefixes,
        log_weights=log_lambda,
        norm_weights=np.exp(log_norm_w),
        ancestors=ancestors,
        t=n_steps,
        n_steps=n_steps,
        cached_target=cached,
        log_prior_prefix=prior_cum,
    )


def particle_gibbs_row(
    n: int,
    Z: FeatureAllocationMatrix,
    model,
    prior,
    config: SamplerConfig,
    rng,
    perm: Permutation | None = None,
    test_path: np.ndarray | None = None,
    diag: SmcDiagnostics | None = None,
) -> np.ndarray:
    """Conditional-SMC update of row n, leaving the row conditional invariant.

    The pre-update row is threaded through slot 0 as the conditional path;
    the output is the final-step weighted draw mapped back to original
    feature order (singletons pinned for the IBP).
    """
    active, base = _active_columns(n, Z, prior)
    if active.size == 0:
        return Z.row(n)
    if perm is None:
        perm = Permutation.random(active.size, rng)
    rho = _row_rho(n, Z, prior, active)
    if test_path is None:
        test_path = make_test_path(
            config.test_path, n, Z, model, prior, config, rng, perm=perm
        )
    target = RowTarget(
        model, n, Z, active, perm, rho, test_path, config.anneal_power, base_row=base
    )
    conditional_bits = Z.bits[n, active][perm.forward]
    system = _smc_pass(
        target,
        config.n_particles,
        config.resample_threshold,
        rng,
        conditional_bits=conditional_bits,
        diag=diag,
    )
    system.check(conditional_prefix=conditional_bits)
    chosen = system.prefixes[_categorical(system.norm_weights, rng)]
    return target.complete_rows(chosen[None, :])[0]


# --------------------------------------------------------------------------- #
# discrete particle filter


def _dpf_pass(
    target: RowTarget,
    max_particles: int,
    rng,
    conditional_bits: np.ndarray,
    diag: SmcDiagnostics | None = None,
) -> ParticleSystem:
    """Enumerative conditional filter; returns the final particle system
    (ancestors index into the post-pruning survivor set of the last step).

    Starts from both values of the first bit; at every later step slot 0
    continues the conditional path, slot 1 is the conditional prefix with the
    current bit flipped (ancestor = conditional particle), and every other
    survivor expands deterministically with both bit values.  Pruning via
    ``resample_dpf`` fires only while the particle count exceeds the target.
    """
    n_steps = target.n_steps

    prefixes = np.array(
        [[conditional_bits[0]], [1 - conditional_bits[0]]], dtype=np.int8
    )
    cached = target.log_density(prefixes)
    prior_cum = target.log_prior_prefix(prefixes)
    if np.isneginf(log_sum_exp(cached)):
        raise DegenerateSupportError("zero mass for both values of the first bit")
    log_lambda = cached  # w_1 = gamma_1 itself
    log_norm_w = cached - log_sum_exp(cached)
    child_parent = np.arange(2)
    if diag is not None:
        diag.n_steps = n_steps
        diag.particle_counts.append(2)

    for t in range(2, n_steps + 1):
        p = prefixes.shape[0]
        if p > max_particles:
            keep, kept_w, _ = resample_dpf(np.exp(log_norm_w), max_particles, rng)
            log_kept_w = np.log(kept_w)  # survivor weights are positive
            if diag is not None:
                diag.n_resample_events += 1
        else:
            keep = np.arange(p)
            log_kept_w = log_norm_w
        assert keep[0] == 0  # conditional particle always survives
        parent_prefixes = prefixes[keep]
        parent_cached = cached[keep]
        parent_prior = prior_cum[keep]

        n_other = keep.size - 1
        children = np.empty((2 + 2 * n_other, t), dtype=np.int8)
        child_parent = np.empty(2 + 2 * n_other, dtype=np.int64)
        children[0, : t - 1] = conditional_bits[: t - 1]
        children[0, t - 1] = conditional_bits[t - 1]
        children[1, : t - 1] = conditional_bits[: t - 1]
        children[1, t - 1] = 1 - conditional_bits[t - 1]
        child_parent[:2] = 0
        if n_other:
            rep = np.repeat(np.arange(1, keep.size), 2)
            children[2:, : t - 1] = parent_prefixes[rep]
            children[2:, t - 1] = np.tile([0, 1], n_other)
            child_parent[2:] = rep

        expo = target.anneal_schedule(t, n_steps, target.beta)
        prior_cum = parent_prior[child_parent] + np.where(
            children[:, t - 1] == 1, target.log_rho[t - 1], target.log_1m_rho[t - 1]
        )
        gamma = expo * target.log_lik(children) + prior_cum
        with np.errstate(invalid="ignore"):
            log_lambda = log_kept_w[child_parent] + gamma - parent_cached[child_parent]
        dead = np.isnan(log_lambda)  # children of zero-mass parents carry none
        if dead.any():
            log_lambda[dead] = -np.inf
        norm = log_sum_exp(log_lambda)
        if np.isneginf(norm):
            raise DegenerateSupportError(f"all path extensions have zero mass at step {t}")
        log_norm_w = log_lambda - norm
        prefixes = children
        cached = gamma
        if diag is not None:
            diag.particle_counts.append(prefixes.shape[0])

    return ParticleSystem(
        prefixes=prefixes,
        log_weights=log_lambda,
        norm_weights=np.exp(log_norm_w),
        ancestors=child_parent,
        t=n_steps,
        n_steps=n_steps,
        cached_target=cached,
        log_prior_prefix=prior_cum,
    )


def dpf_row(
    n: int,
    Z: FeatureAllocationMatrix,
    model,
    prior,
    config: SamplerConfig,
    rng,
    perm: Permutation | None = None,
    test_path: np.ndarray | None = None,
    diag: SmcDiagnostics | None = None,
) -> np.ndarray:
    """Discrete-particle-filter update of row n.

    With 2^(T-1) <= dpf_max_particles the tree is never pruned and the update
    is an exact draw from the row conditional, identical in law to
    ``row_wise_gibbs_row``.
    """
    active, base = _active_columns(n, Z, prior)
    if active.size == 0:
        return Z.row(n)
    if perm is None:
        perm = Permutation.random(active.size, rng)
    rho = _row_rho(n, Z, prior, active)
    if test_path is None:
        test_path = make_test_path(
            config.test_path, n, Z, model, prior, config, rng, perm=perm
        )
    target = RowTarget(
        model, n, Z, active, perm, rho, test_path, config.anneal_power, base_row=base
    )
    conditional_bits = Z.bits[n, active][perm.forward]
    system = _dpf_pass(
        target, config.dpf_max_particles, rng, conditional_bits, diag=diag
    )
    system.check(conditional_prefix=conditional_bits)
    chosen = system.prefixes[_categorical(system.norm_weights, rng)]
    return target.complete_rows(chosen[None, :])[0]


# --------------------------------------------------------------------------- #
# test paths


def make_test_path(
    strategy: TestPathStrategy,
    n: int,
    Z: FeatureAllocationMatrix,
    model,
    prior,
    config: SamplerConfig,
    rng,
    perm: Permutation | None = None,
) -> np.ndarray:
    """Placeholder bits for the not-yet-sampled feature positions, in
    original active-column order.

    The Conditional and TwoStage strategies depend on the pre-update row and
    are valid during burn-in only; the Unconditional and TwoStage strategies
    run a pilot unconditional SMC pass sharing the kernel's tuning values.
    """
    strategy = TestPathStrategy(strategy)
    active, base = _active_columns(n, Z, prior)
    t = active.size
    if strategy == TestPathStrategy.ZEROS:
        return np.zeros(t, dtype=np.int8)
    if strategy == TestPathStrategy.ONES:
        return np.ones(t, dtype=np.int8)
    if strategy == TestPathStrategy.RANDOM:
        return rng.integers(0, 2, size=t).astype(np.int8)
    if strategy == TestPathStrategy.CONDITIONAL:
        return Z.bits[n, active].copy()
    if perm is None:
        perm = Permutation.random(t, rng)
    if strategy == TestPathStrategy.UNCONDITIONAL:
        pilot_path = np.zeros(t, dtype=np.int8)
    else:  # TWO_STAGE
        pilot_path = Z.bits[n, active].copy()
    rho = _row_rho(n, Z, prior, active)
    target = RowTarget(
        model, n, Z, active, perm, rho, pilot_path, config.anneal_power, base_row=base
    )
    system = _smc_pass(
        target, config.n_particles, config.resample_threshold, rng, conditional_bits=None
    )
    chosen = system.prefixes[_categorical(system.norm_weights, rng)]
    out = np.zeros(t, dtype=np.int8)
    out[perm.forward] = chosen
    return out


# --------------------------------------------------------------------------- #
# IBP singleton moves


def update_singletons_mh(
    n: int,
    Z: FeatureAllocationMatrix,
    model,
    prior: IndianBuffetPrior,
    rng,
) -> bool:
    """Replace row n's singleton features by a Poisson(alpha/N) number of
    fresh ones with prior-drawn parameters; accept on the likelihood ratio
    alone (proposal and prior terms cancel)."""
    if not isinstance(prior, IndianBuffetPrior):
        raise ContractError("singleton updates require the IBP prior")
    cur_singles = Z.singleton_columns(n)
    j_prop = int(rng.poisson(prior.alpha / Z.n_rows))
    if j_prop == 0 and cur_singles.size == 0:
        return True
    k_before = Z.n_cols
    model.add_features(j_prop, rng)
    Z.add_singleton_columns(n, j_prop)
    new_cols = np.arange(k_before, k_before + j_prop)
    prop_row = Z.bits[n].copy()
    prop_row[cur_singles] = 0
    cur_row = Z.bits[n].copy()
    cur_row[new_cols] = 0
    log_ratio = model.log_lik_row(n, prop_row, Z) - model.log_lik_row(n, cur_row, Z)
    if math.log(rng.uniform()) < log_ratio:
        Z.set_row(n, prop_row)
        Z.remove_columns(cur_singles)
        model.remove_features(cur_singles)
        return True
    Z.set_row(n, cur_row)
    Z.remove_columns(new_cols)
    model.remove_features(new_cols)
    return False


def lg_singleton_marginal_log_lik(
    model: LinearGaussianModel, n: int, base_row: np.ndarray, count: int
) -> float:
    """Marginal likelihood of row n's data with ``count`` singleton features
    integrated out: each observed dimension is Normal with mean from the kept
    features and variance 1/tau_x + count/tau_v."""
    mask = model.obs_mask[n]
    if not mask.any():
        return 0.0
    mu = base_row.astype(np.float64) @ model.V[:, mask]
    var = 1.0 / model.tau_x + count / model.tau_v
    diff = model.x_filled[n, mask] - mu
    return float(
        -0.5 * mask.sum() * math.log(2.0 * math.pi * var)
        - 0.5 * (diff * diff).sum() / var
    )


def update_singletons_collapsed_lg(
    n: int,
    Z: FeatureAllocationMatrix,
    model: LinearGaussianModel,
    prior: IndianBuffetPrior,
    rng,
) -> bool:
    """Collapsed singleton move for the linear Gaussian model: the proposed
    features' parameters are integrated out of the acceptance ratio and, on
    acceptance, redrawn from their Gaussian conditional posterior."""
    if not isinstance(model, LinearGaussianModel):
        raise ContractError("the collapsed singleton move requires conjugacy")
    if not isinstance(prior, IndianBuffetPrior):
        raise ContractError("singleton updates require the IBP prior")
    cur_singles = Z.singleton_columns(n)
    j_cur = cur_singles.size
    j_prop = int(rng.poisson(prior.alpha / Z.n_rows))
    if j_prop == 0 and j_cur == 0:
        return True
    base_row = Z.bits[n].copy()
    base_row[cur_singles] = 0
    log_ratio = lg_singleton_marginal_log_lik(model, n, base_row, j_prop)
    log_ratio -= lg_singleton_marginal_log_lik(model, n, base_row, j_cur)
    if math.log(rng.uniform()) >= log_ratio:
        return False
    # accepted: swap columns and draw the new parameters from their posterior
    new_params = _lg_posterior_singleton_params(model, n, base_row, j_prop, rng)
    Z.remove_columns(cur_singles)
    model.remove_features(cur_singles)
    Z.add_singleton_columns(n, j_prop)
    model.append_feature_params(new_params)
    return True


def _lg_posterior_singleton_params(
    model: LinearGaussianModel, n: int, base_row: np.ndarray, count: int, rng
) -> np.ndarray:
    """Draw ``count`` singleton parameter vectors from their joint Gaussian
    posterior given row n's residual; unobserved dimensions fall back to the
    prior."""
    if count == 0:
        return np.zeros((0, model.n_dims))
    d = model.n_dims
    out = np.empty((count, d))
    prec = model.tau_v * np.eye(count) + model.tau_x * np.ones((count, count))
    chol = np.linalg.cholesky(prec)
    resid = model.x_filled[n] - base_row.astype(np.float64) @ model.V
    scale = model.tau_x / (model.tau_v + count * model.tau_x)
    for dim in range(d):
        if model.obs_mask[n, dim]:
            mean = scale * resid[dim]
            noise = np.linalg.solve(chol.T, rng.normal(size=count))
            out[:, dim] = mean + noise
        else:
            out[:, dim] = rng.normal(size=count) / math.sqrt(model.tau_v)
    return out
