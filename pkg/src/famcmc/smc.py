"""Sequential-Monte-Carlo primitives for row updates.

A row update builds a sequence of T target densities over growing bit
prefixes: step t fixes the feature visited t-th in the (randomized) feature
order, entries not yet visited are filled from a *test path*, and the data
likelihood may be annealed along the sequence.  The final target is always
proportional to the exact row conditional, for every annealing power.

All weight arithmetic is carried in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from famcmc.allocation import ContractError, Permutation, complete_row


def log_sum_exp(values: np.ndarray) -> float:
    """Stable log(sum(exp(x))) without per-call dispatch overhead."""
    m = values.max()
    if not np.isfinite(m):
        return float(m) if m < 0 else float("inf")
    return float(m + math.log(np.exp(values - m).sum()))


class DegenerateSupportError(RuntimeError):
    """Both one-bit extensions of a prefix carry zero target mass."""


class TestPathStrategy(str, Enum):
    __test__ = False  # not a pytest class, despite the name

    CONDITIONAL = "conditional"
    ONES = "ones"
    RANDOM = "random"
    TWO_STAGE = "two_stage"
    UNCONDITIONAL = "unconditional"
    ZEROS = "zeros"


# strategies whose test path depends on the conditional path do not yield
# valid Gibbs updates; they are usable during burn-in only
BURNIN_ONLY_STRATEGIES = frozenset(
    {TestPathStrategy.CONDITIONAL, TestPathStrategy.TWO_STAGE}
)


@dataclass
class SamplerConfig:
    """Tuning parameters shared by the SMC-based row kernels."""

    n_particles: int = 20
    resample_threshold: float = 0.5
    anneal_power: float = 1.0
    dpf_max_particles: int = 20
    test_path: TestPathStrategy = TestPathStrategy.ZEROS
    row_gibbs_max_features: int = 25

    def __post_init__(self):
        self.test_path = TestPathStrategy(self.test_path)
        if self.n_particles < 2:
            raise ContractError("need at least two particles")
        if self.dpf_max_particles < 2:
            raise ContractError("need dpf_max_particles >= 2")
        if not 0.0 <= self.resample_threshold <= 1.0:
            raise ContractError("resample threshold must lie in [0, 1]")
        if self.anneal_power < 0:
            raise ContractError("annealing power must be nonnegative")


def anneal_exponent(t: int, n_steps: int, power: float) -> float:
    """Likelihood exponent at step t: (t/T)^power.

    power = 0 applies the full likelihood at every step (the unannealed
    sequence); the exponent reaches 1 at t = T for every power, so the final
    target is untouched by annealing.
    """
    return (t / n_steps) ** power


class RowTarget:
    """The sequence of annealed targets gamma_t for one row update.

    Operates on the ``active`` columns of the row (all K for a finite prior;
    the non-singleton columns for the IBP, with singleton entries pinned to
    one in every likelihood evaluation).  Prefix bits live in permuted
    (visit) order; completed rows are assembled in original feature order.
    """

    def __init__(
        self,
        model,
        n: int,
        Z,
        active_cols,
        perm: Permutation,
        rho_active,
        test_path,
        beta: float = 1.0,
        base_row=None,
        anneal_schedule=anneal_exponent,
    ):
        self.model = model
        self.n = n
        self.Z = Z
        self.active_cols = np.asarray(active_cols, dtype=np.int64)
        self.perm = perm
        self.beta = float(beta)
        self.anneal_schedule = anneal_schedule
        rho_active = np.asarray(rho_active, dtype=np.float64)
        if rho_active.shape != (self.active_cols.size,):
            raise ContractError("rho vector length does not match active columns")
        if perm.size != self.active_cols.size:
            raise ContractError("permutation size does not match active columns")
        test_path = np.asarray(test_path, dtype=np.int8)
        if test_path.shape != (self.active_cols.size,):
            raise ContractError("test path length does not match active columns")
        self.test_path = test_path
        # visit order: step s touches active column perm.forward[s]
        self.log_rho = np.log(rho_active[perm.forward])
        self.log_1m_rho = np.log1p(-rho_active[perm.forward])
        if base_row is None:
            # full row and active columns coincide for finite priors
            base_row = np.zeros(self.active_cols.size, dtype=np.int8)
        self.base_row = np.asarray(base_row, dtype=np.int8)
        if self.active_cols.size and self.active_cols.max() >= self.base_row.size:
            raise ContractError("active column index exceeds the row template")
        # scaffold: base row with test-path values at the active positions
        scaffold = self.base_row.copy()
        scaffold[self.active_cols] = self.test_path
        self.scaffold = scaffold
        # original-order column index visited at each step
        self.visit_cols = self.active_cols[perm.forward]

    @property
    def n_steps(self) -> int:
        return self.active_cols.size

    def complete_rows(self, prefixes: np.ndarray) -> np.ndarray:
        """Full-length usage rows for a batch of permuted-order prefixes."""
        prefixes = np.atleast_2d(np.asarray(prefixes, dtype=np.int8))
        t = prefixes.shape[1]
        rows = np.empty((prefixes.shape[0], self.scaffold.size), dtype=np.int8)
        rows[:] = self.scaffold
        rows[:, self.visit_cols[:t]] = prefixes
        return rows

    def log_prior_prefix(self, prefixes: np.ndarray) -> np.ndarray:
        prefixes = np.atleast_2d(np.asarray(prefixes, dtype=np.float64))
        t = prefixes.shape[1]
        return prefixes @ self.log_rho[:t] + (1.0 - prefixes) @ self.log_1m_rho[:t]

    def log_lik(self, prefixes: np.ndarray) -> np.ndarray:
        rows = self.complete_rows(prefixes)
        return self.model.log_lik_rows(self.n, rows, self.Z)

    def log_density(self, prefixes: np.ndarray) -> np.ndarray:
        """gamma_t (log) for a batch of prefixes; t is the prefix length."""
        prefixes = np.atleast_2d(np.asarray(prefixes, dtype=np.int8))
        t = prefixes.shape[1]
        expo = self.anneal_schedule(t, self.n_steps, self.beta)
        return expo * self.log_lik(prefixes) + self.log_prior_prefix(prefixes)

    def extension_log_densities(
        self, prefixes: np.ndarray, prior_prefix: np.ndarray | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """(gamma_t with bit 0, gamma_t with bit 1) for each prefix of length t-1,
        using exactly two fresh likelihood evaluations per prefix (one batch).

        ``prior_prefix`` optionally carries each prefix's accumulated
        Bernoulli log mass to avoid recomputation inside sampler loops.
        """
        prefixes = np.atleast_2d(np.asarray(prefixes, dtype=np.int8))
        p = prefixes.shape[0]
        t = prefixes.shape[1] + 1
        both = np.empty((2 * p, t), dtype=np.int8)
        both[:p, : t - 1] = prefixes
        both[p:, : t - 1] = prefixes
        both[:p, t - 1] = 0
        both[p:, t - 1] = 1
        expo = self.anneal_schedule(t, self.n_steps, self.beta)
        lik = self.model.log_lik_rows(self.n, self.complete_rows(both), self.Z)
        if prior_prefix is None:
            prior_prefix = (
                self.log_prior_prefix(prefixes) if t > 1 else np.zeros(p)
            )
        g0 = expo * lik[:p] + prior_prefix + self.log_1m_rho[t - 1]
        g1 = expo * lik[p:] + prior_prefix + self.log_rho[t - 1]
        return g0, g1


def smc_target_log_density(
    prefix,
    test_path,
    perm: Permutation,
    rho,
    beta: float,
    model,
    n: int,
    Z=None,
    active_cols=None,
    base_row=None,
) -> float:
    """Standalone evaluation of log gamma_t for a single prefix."""
    k = perm.size
    if active_cols is None:
        active_cols = np.arange(k)
    target = RowTarget(
        model, n, Z, active_cols, perm, rho, test_path, beta, base_row=base_row
    )
    return float(target.log_density(np.asarray(prefix, dtype=np.int8)[None, :])[0])


def adapted_proposal_and_weight(
    target: RowTarget, prefix, cached_prev: float | None = None
) -> tuple[float, float]:
    """Fully adapted one-step proposal and incremental weight for one prefix.

    Returns (Bernoulli parameter for the next bit, log incremental weight).
    ``cached_prev`` is the cached value of log gamma_{t-1}(prefix); it is
    required for t >= 2 and ignored for the first step, whose weight is the
    plain normalizer sum.
    """
    prefix = np.asarray(prefix, dtype=np.int8)
    g0, g1 = target.extension_log_densities(prefix[None, :])
    pair = np.array([g0[0], g1[0]])
    norm = log_sum_exp(pair)
    if np.isneginf(norm):
        raise DegenerateSupportError(
            f"zero mass for both extensions of prefix {prefix.tolist()}"
        )
    p1 = float(np.exp(pair[1] - norm))
    if prefix.size == 0:
        log_w = float(norm)
    else:
        if cached_prev is None:
            cached_prev = float(target.log_density(prefix[None, :])[0])
        log_w = float(norm - cached_prev)
    return p1, log_w


def dpf_incremental_weight(
    target: RowTarget, prefix_with_bit, cached_prev: float | None = None
) -> float:
    """log w_t for the enumerative filter: gamma_1 itself at the first step,
    gamma_t / gamma_{t-1} afterwards (annealed targets substituted as is)."""
    prefix_with_bit = np.asarray(prefix_with_bit, dtype=np.int8)
    g = float(target.log_density(prefix_with_bit[None, :])[0])
    if prefix_with_bit.size == 1:
        return g
    if cached_prev is None:
        cached_prev = float(target.log_density(prefix_with_bit[None, :-1])[0])
    return g - cached_prev


def relative_ess(norm_weights) -> float:
    """(P * sum w^2)^-1: 1 for uniform weights, 1/P for a point mass."""
    w = np.asarray(norm_weights, dtype=np.float64)
    return float(1.0 / (w.size * (w * w).sum()))


def conditional_multinomial_resample(norm_weights, n_particles: int, rng) -> np.ndarray:
    """Ancestor indices with slot 0 pinned to the conditional particle and
    the rest drawn i.i.d. categorical from the normalized weights."""
    w = np.asarray(norm_weights, dtype=np.float64)
    if abs(w.sum() - 1.0) > 1e-8 or (w < 0).any():
        raise ContractError("weights must be normalized")
    ancestors = np.empty(n_particles, dtype=np.int64)
    ancestors[0] = 0
    cum = np.cumsum(w)
    cum[-1] = 1.0
    ancestors[1:] = np.searchsorted(cum, rng.uniform(size=n_particles - 1), side="right")
    return ancestors


def _survival_scale(w: np.ndarray, target: float) -> float:
    """Root c of sum_i min(1, c w_i) = target (continuous, nondecreasing)."""
    lo, hi = 1.0, 2.0
    while np.minimum(1.0, hi * w).sum() < target:
        hi *= 2.0
        if hi > 1e300:
            raise ContractError("no root: not enough positive-weight particles")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.minimum(1.0, mid * w).sum() < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


def resample_dpf(norm_weights, max_particles: int, rng) -> tuple[np.ndarray, np.ndarray, int]:
    """Optimal stochastic pruning to an expected ``max_particles`` survivors.

    Particles with w_i >= 1/c are retained deterministically at weight w_i;
    each other particle survives with probability c*w_i at weight 1/c.  The
    conditional particle (index 0) is always retained, at weight
    max(w_0, 1/c).  Returns (retained indices, renormalized weights, count).
    """
    w = np.asarray(norm_weights, dtype=np.float64)
    p = w.size
    if p <= max_particles:
        raise ContractError("resampling requires more particles than the target")
    if abs(w.sum() - 1.0) > 1e-8 or (w < 0).any():
        raise ContractError("weights must be normalized")
    n_positive = int((w > 0).sum())
    if n_positive <= max_particles:
        # fewer live particles than the target: keep every live one as is
        keep = np.flatnonzero((w > 0) | (np.arange(p) == 0))
        new_w = w[keep] / w[keep].sum()
        return keep, new_w, keep.size
    c = _survival_scale(w, float(max_particles))
    thresh = 1.0 / c
    keep_mask = w >= thresh
    lottery = ~keep_mask
    lottery[0] = False
    survive = np.zeros(p, dtype=bool)
    survive[lottery] = rng.uniform(size=int(lottery.sum())) < c * w[lottery]
    new_weights = np.where(keep_mask, w, thresh)
    keep_mask = keep_mask | survive
    keep_mask[0] = True
    new_weights[0] = max(w[0], thresh)
    keep = np.flatnonzero(keep_mask)
    out_w = new_weights[keep]
    out_w = out_w / out_w.sum()
    return keep, out_w, keep.size


@dataclass
class ParticleSystem:
    """State of an SMC pass: permuted-order prefixes with weights and caches.

    Slot 0 always holds the conditional-path prefix in conditional passes.
    """

    prefixes: np.ndarray          # P x t int8
    log_weights: np.ndarray       # unnormalized, log scale
    norm_weights: np.ndarray
    ancestors: np.ndarray
    t: int
    n_steps: int
    cached_target: np.ndarray     # log gamma_t of each particle's prefix
    log_prior_prefix: np.ndarray  # running Bernoulli-prefix log mass

    def check(self, conditional_prefix=None) -> None:
        assert abs(self.norm_weights.sum() - 1.0) < 1e-12
        assert self.prefixes.shape[1] == self.t
        if conditional_prefix is not None:
            assert np.array_equal(self.prefixes[0], conditional_prefix[: self.t])


@dataclass
class SmcDiagnostics:
    """Optional per-update instrumentation collected by the SMC kernels."""

    n_resample_events: int = 0
    n_steps: int = 0
    raw_log_weights: list = field(default_factory=list)
    particle_counts: list = field(default_factory=list)
