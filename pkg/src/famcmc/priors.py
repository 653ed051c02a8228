"""Prior distributions over feature allocation matrices.

Two priors are supported: the finite Beta-Bernoulli (FBB) distribution over
N x K binary matrices, and the Indian Buffet Process (IBP) over matrices with
an unbounded number of non-empty columns.  Both probability mass functions
depend on the matrix only through the column counts {m_k}, so they are
invariant under row and column permutations.

The pmfs are implemented in the form commonly printed for these models:

    FBB:  I(K_N = K) * prod_k Gamma(m_k + a) Gamma(N - m_k + b) / Gamma(N + a + b)
    IBP:  alpha^{K_N} / K_N! * prod_k Gamma(m_k) Gamma(N - m_k + 1) / Gamma(N + 1)

The FBB form omits the constant-in-Z factor [Gamma(a+b)/(Gamma(a)Gamma(b))]^K
of the standard Beta-Bernoulli marginal, so it sums to one over all matrices
only when a = b = 1; MCMC acceptance ratios and Gibbs conditionals are
unaffected.  See ``predictive_log_pmf`` for the consistency caveats of the
IBP form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from famcmc.allocation import ContractError, FeatureAllocationMatrix


@dataclass(frozen=True)
class BetaBernoulliPrior:
    """Finite Beta-Bernoulli prior with K features and Beta(a, b) usage."""

    n_features: int
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.n_features < 1:
            raise ContractError("FBB needs at least one feature")
        if self.a <= 0 or self.b <= 0:
            raise ContractError("Beta parameters must be positive")

    def log_pmf(self, fa: FeatureAllocationMatrix) -> float:
        """log p(f_N); -inf when the matrix does not have exactly K columns."""
        if fa.n_cols != self.n_features:
            return -np.inf
        n = fa.n_rows
        m = fa.col_counts
        per_col = (
            gammaln(m + self.a)
            + gammaln(n - m + self.b)
            - gammaln(n + self.a + self.b)
        )
        return float(per_col.sum())

    def predictive_probs(self, m_excl, n_cond: int) -> np.ndarray:
        """rho_k = (m_k + a) / (n_cond + a + b), elementwise over m_excl."""
        m = np.asarray(m_excl, dtype=np.float64)
        if (m < 0).any() or (m > n_cond).any():
            raise ContractError("usage counts must lie in [0, n_cond]")
        return (m + self.a) / (n_cond + self.a + self.b)

    def predictive_log_pmf(
        self,
        fa: FeatureAllocationMatrix,
        new_row,
        n_new_singletons: int = 0,
    ) -> float:
        """log p(f_{N+1} | f_N) = sum_k log Bernoulli(z_k | rho_{N+1,k}).

        Equals log p(f_{N+1}) - log p(f_N) of the pmf above exactly.
        """
        if n_new_singletons != 0:
            raise ContractError("the FBB admits no new features")
        new_row = np.asarray(new_row)
        if new_row.shape != (fa.n_cols,):
            raise ContractError("new row length does not match K_N")
        rho = self.predictive_probs(fa.col_counts, fa.n_rows)
        return float(np.where(new_row == 1, np.log(rho), np.log1p(-rho)).sum())


@dataclass(frozen=True)
class IndianBuffetPrior:
    """Indian Buffet Process prior with mass parameter alpha."""

    alpha: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ContractError("alpha must be positive")

    def log_pmf(self, fa: FeatureAllocationMatrix) -> float:
        """log p(f_N) for a matrix with no empty columns."""
        if (fa.col_counts == 0).any():
            raise ContractError("IBP pmf is undefined for empty columns")
        n = fa.n_rows
        k = fa.n_cols
        m = fa.col_counts
        per_col = gammaln(m) + gammaln(n - m + 1) - gammaln(n + 1)
        return float(k * np.log(self.alpha) - gammaln(k + 1) + per_col.sum())

    def predictive_probs(self, m_excl, n_cond: int) -> np.ndarray:
        """rho_k = m_k / (n_cond + 1), elementwise over m_excl."""
        m = np.asarray(m_excl, dtype=np.float64)
        if (m < 0).any() or (m > n_cond).any():
            raise ContractError("usage counts must lie in [0, n_cond]")
        return m / (n_cond + 1.0)

    def predictive_log_pmf(
        self,
        fa: FeatureAllocationMatrix,
        new_row,
        n_new_singletons: int = 0,
    ) -> float:
        """log of Poisson(J | alpha/(N+1)) * prod_k Bernoulli(z_k | rho_{N+1,k}).

        Note that this is *not* the exact log-ratio of ``log_pmf`` above: that
        ratio lacks the Poisson normalizer exp(-alpha/(N+1)) and replaces
        1/J! by 1/((K_N+1)...(K_N+J)).  The two agree under the fully
        exchangeable (multiset) form of the process, which is also the law
        the samplers' singleton moves preserve.
        """
        j = int(n_new_singletons)
        if j < 0:
            raise ContractError("singleton count must be nonnegative")
        new_row = np.asarray(new_row)
        if new_row.shape != (fa.n_cols,):
            raise ContractError("new row length does not match K_N")
        n = fa.n_rows
        lam = self.alpha / (n + 1.0)
        log_poisson = j * np.log(lam) - lam - gammaln(j + 1)
        if fa.n_cols == 0:
            return float(log_poisson)
        rho = self.predictive_probs(fa.col_counts, n)
        bern = np.where(new_row == 1, np.log(rho), np.log1p(-rho)).sum()
        return float(log_poisson + bern)


Prior = BetaBernoulliPrior | IndianBuffetPrior


def predictive_feature_prob(prior: Prior, m_excl: int, n_cond: int) -> float:
    """Probability rho that a row uses a feature seen m_excl times among
    n_cond conditioned rows.  For the Gibbs update on a row of an N-row
    matrix, n_cond = N - 1."""
    return float(prior.predictive_probs(np.asarray([m_excl]), n_cond)[0])
