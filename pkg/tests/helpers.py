"""Shared test fixtures and independently coded oracles.

The enumeration oracles here deliberately avoid the package's vectorized
target/likelihood plumbing: they loop over states and recompute densities
from first principles so that sampler output is checked against a second,
independent route.
"""

import itertools
import math

import numpy as np
from scipy.special import gammaln
from scipy.stats import chi2


class FlatModel:
    """Likelihood identically one; tracks a feature count for singleton moves."""

    def __init__(self, n_rows, n_features=0):
        self.n_rows = n_rows
        self.n_features = n_features

    def log_lik_rows(self, n, candidates, Z=None):
        return np.zeros(np.atleast_2d(candidates).shape[0])

    def log_lik_row(self, n, z_row, Z=None):
        return 0.0

    def add_features(self, count, rng):
        self.n_features += count

    def remove_features(self, idx):
        self.n_features -= np.atleast_1d(idx).size


class TableModel:
    """Row log-likelihood given by an explicit per-state table (N x 2^K)."""

    def __init__(self, table, k):
        self.table = np.asarray(table, dtype=np.float64)
        self.k = k
        self.n_rows = self.table.shape[0]

    def _codes(self, candidates):
        cand = np.atleast_2d(np.asarray(candidates, dtype=np.int64))
        return (cand * (1 << np.arange(self.k))).sum(axis=1)

    def log_lik_rows(self, n, candidates, Z=None):
        return self.table[n, self._codes(candidates)]

    def log_lik_row(self, n, z_row, Z=None):
        return float(self.log_lik_rows(n, np.asarray(z_row)[None, :])[0])


def state_bits(k):
    """All 2^k bit vectors; state s has bit j = (s >> j) & 1."""
    s = np.arange(1 << k)
    return ((s[:, None] >> np.arange(k)) & 1).astype(np.int8)


def row_code(row):
    row = np.asarray(row, dtype=np.int64)
    return int((row * (1 << np.arange(row.size))).sum())


def exact_row_conditional(model, rho, n, Z_bits, k):
    """Brute-force row conditional: likelihood x prod Bernoulli(rho), looped."""
    probs = np.zeros(1 << k)
    for s, bits in enumerate(state_bits(k)):
        lp = model.log_lik_row(n, bits)
        for j in range(k):
            lp += math.log(rho[j]) if bits[j] else math.log1p(-rho[j])
        probs[s] = lp
    probs = np.exp(probs - probs.max())
    return probs / probs.sum()


def exact_fbb_posterior_row_marginals(row_loglik_table, n_rows, k, a, b):
    """Posterior row-state marginals from full 2^(N*K) enumeration.

    row_loglik_table[r, s] is row r's log likelihood in state s.  Returns an
    (N, 2^K) matrix of exact marginals p(z_r = s | X, theta) under the finite
    Beta-Bernoulli prior, computed by brute force.
    """
    n_states = 1 << k
    bits = state_bits(k)
    col_table = (
        gammaln(np.arange(n_rows + 1) + a)
        + gammaln(n_rows - np.arange(n_rows + 1) + b)
        - gammaln(n_rows + a + b)
    )
    grids = np.meshgrid(*([np.arange(n_states)] * n_rows), indexing="ij")
    codes = np.stack([g.reshape(-1) for g in grids], axis=1)  # (S^N, N)
    logp = np.zeros(codes.shape[0])
    for r in range(n_rows):
        logp += row_loglik_table[r, codes[:, r]]
    for col in range(k):
        counts = bits[codes, col].sum(axis=1)
        logp += col_table[counts]
    p = np.exp(logp - logp.max())
    p /= p.sum()
    marginals = np.zeros((n_rows, n_states))
    for r in range(n_rows):
        for s in range(n_states):
            marginals[r, s] = p[codes[:, r] == s].sum()
    return marginals


def tv_distance(p, q):
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum()


def chi_square_gof_pvalue(counts, probs):
    counts = np.asarray(counts, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    keep = probs > 1e-12
    expected = counts.sum() * probs[keep]
    stat = ((counts[keep] - expected) ** 2 / expected).sum()
    dof = keep.sum() - 1
    return float(chi2.sf(stat, dof))


def lg_loglik_table(x_rows, V, tau_x, k):
    """Independent linear Gaussian per-state log likelihood table."""
    x_rows = np.atleast_2d(x_rows)
    n, d = x_rows.shape
    table = np.zeros((n, 1 << k))
    for s, bits in enumerate(state_bits(k)):
        mean = bits @ V
        for r in range(n):
            diff = x_rows[r] - mean
            table[r, s] = 0.5 * d * (math.log(tau_x) - math.log(2 * math.pi)) - (
                0.5 * tau_x * float(diff @ diff)
            )
    return table


def batch_mean_se(samples, n_batches=20):
    """Standard error of a correlated-chain mean via batch means."""
    samples = np.asarray(samples, dtype=np.float64)
    usable = samples[: samples.size - samples.size % n_batches]
    means = usable.reshape(n_batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))
