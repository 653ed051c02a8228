"""Binomial count likelihood with feature-mixed cellular prevalences.

Mutation n in sample m is observed as b_nm variant reads out of depth d_nm.
Sub-population proportions f_km are column-normalized positive values v_km
with Gamma(a_v, b_v) priors; a mutation's cellular prevalence in sample m is
phi_nm = sum_k z_nk f_km and its variant-read success probability is

    xi_nm = error_rate + (het_vaf - error_rate) * phi_nm

so that phi = 0 leaves only sequencing error and phi = 1 reaches the diploid
heterozygous fraction.  The v values are updated by three MH kernels: a
single-entry log-scale random walk, a whole-sample-column log-scale random
walk, and a symmetric proposal permuting a sample's column.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from famcmc.allocation import ContractError, FeatureAllocationMatrix
from famcmc.models.base import gamma_logpdf


def cellular_prevalence(z_row, f) -> np.ndarray:
    """phi_m = sum_k z_k f_km for one usage row; f columns sum to one."""
    return np.asarray(z_row, dtype=np.float64) @ np.asarray(f, dtype=np.float64)


class PycloneModel:
    def __init__(
        self,
        b_counts,
        depths,
        v,
        error_rate: float = 0.01,
        het_vaf: float = 0.5,
        a_v: float = 1.0,
        b_v: float = 1.0,
        rw_step: float = 0.5,
        flat_likelihood: bool = False,
    ):
        self.b = np.asarray(b_counts, dtype=np.int64)
        self.d = np.asarray(depths, dtype=np.int64)
        if self.b.shape != self.d.shape or self.b.ndim != 2:
            raise ContractError("variant and depth counts must be matching N x M matrices")
        if (self.b < 0).any() or (self.b > self.d).any():
            raise ContractError("need 0 <= b <= d")
        self.v = np.atleast_2d(np.asarray(v, dtype=np.float64)).copy()
        if (self.v <= 0).any():
            raise ContractError("v entries must be positive")
        if self.v.shape[1] != self.b.shape[1]:
            raise ContractError("v sample dimension does not match data")
        if not 0 <= error_rate < het_vaf <= 1:
            raise ContractError("need 0 <= error_rate < het_vaf <= 1")
        self.error_rate = error_rate
        self.het_vaf = het_vaf
        self.a_v, self.b_v = a_v, b_v
        self.rw_step = rw_step
        self.flat_likelihood = flat_likelihood
        # binomial coefficients are constant in (Z, v); cache per row
        self._log_binom = (
            gammaln(self.d + 1) - gammaln(self.b + 1) - gammaln(self.d - self.b + 1)
        )
        self._refresh_f()

    def _refresh_f(self) -> None:
        totals = self.v.sum(axis=0)
        self.f = self.v / totals

    @property
    def n_rows(self) -> int:
        return self.b.shape[0]

    @property
    def n_samples(self) -> int:
        return self.b.shape[1]

    @property
    def n_features(self) -> int:
        return self.v.shape[0]

    # ------------------------------------------------------------------ #
    # likelihood

    def _success_probs(self, phi) -> np.ndarray:
        return self.error_rate + (self.het_vaf - self.error_rate) * phi

    def log_lik_rows(self, n: int, candidates, Z=None) -> np.ndarray:
        cand = np.asarray(candidates, dtype=np.float64)
        if self.flat_likelihood:
            return np.zeros(cand.shape[0])
        xi = self._success_probs(cand @ self.f)  # B x M
        ll = self.b[n] * np.log(xi) + (self.d[n] - self.b[n]) * np.log1p(-xi)
        return ll.sum(axis=1) + self._log_binom[n].sum()

    def log_lik_row(self, n: int, z_row, Z=None) -> float:
        return float(self.log_lik_rows(n, np.asarray(z_row)[None, :], Z)[0])

    def log_lik_total(self, fa: FeatureAllocationMatrix) -> float:
        if self.flat_likelihood:
            return 0.0
        xi = self._success_probs(fa.bits.astype(np.float64) @ self.f)
        ll = self.b * np.log(xi) + (self.d - self.b) * np.log1p(-xi)
        return float(ll.sum() + self._log_binom.sum())

    def _column_loglik(self, m: int, f_col, zb) -> float:
        """Likelihood of sample m's counts under a trial column of f."""
        if self.flat_likelihood:
            return 0.0
        xi = self._success_probs(zb @ f_col)
        return float(
            (self.b[:, m] * np.log(xi) + (self.d[:, m] - self.b[:, m]) * np.log1p(-xi)).sum()
        )

    def log_prior_params(self) -> float:
        return float(gamma_logpdf(self.v, self.a_v, self.b_v).sum())

    # ------------------------------------------------------------------ #
    # parameter kernels

    def update_params(self, fa: FeatureAllocationMatrix, rng) -> None:
        zb = fa.bits.astype(np.float64)
        for m in range(self.n_samples):
            for k in range(self.n_features):
                self._update_single(k, m, zb, rng)
            self._update_column_block(m, zb, rng)
            self._update_column_permutation(m, zb, rng)
        self._refresh_f()

    def _update_single(self, k: int, m: int, zb, rng) -> None:
        cur = self.v[k, m]
        prop = cur * math.exp(self.rw_step * rng.normal())
        new_col = self.v[:, m].copy()
        new_col[k] = prop
        log_ratio = self._column_loglik(m, new_col / new_col.sum(), zb)
        log_ratio -= self._column_loglik(m, self.f[:, m], zb)
        log_ratio += float(gamma_logpdf(prop, self.a_v, self.b_v))
        log_ratio -= float(gamma_logpdf(cur, self.a_v, self.b_v))
        log_ratio += math.log(prop) - math.log(cur)  # log-scale Jacobian
        if math.log(rng.uniform()) < log_ratio:
            self.v[k, m] = prop
            self.f[:, m] = new_col / new_col.sum()

    def _update_column_block(self, m: int, zb, rng) -> None:
        cur = self.v[:, m]
        prop = cur * np.exp(self.rw_step * rng.normal(size=cur.size))
        log_ratio = self._column_loglik(m, prop / prop.sum(), zb)
        log_ratio -= self._column_loglik(m, self.f[:, m], zb)
        log_ratio += float(
            (gamma_logpdf(prop, self.a_v, self.b_v) - gamma_logpdf(cur, self.a_v, self.b_v)).sum()
        )
        log_ratio += float(np.log(prop).sum() - np.log(cur).sum())
        if math.log(rng.uniform()) < log_ratio:
            self.v[:, m] = prop
            self.f[:, m] = prop / prop.sum()

    def _update_column_permutation(self, m: int, zb, rng) -> None:
        # symmetric proposal over an iid prior: prior terms cancel exactly
        order = rng.permutation(self.n_features)
        prop = self.v[order, m]
        log_ratio = self._column_loglik(m, prop / prop.sum(), zb)
        log_ratio -= self._column_loglik(m, self.f[:, m], zb)
        if math.log(rng.uniform()) < log_ratio:
            self.v[:, m] = prop
            self.f[:, m] = prop / prop.sum()

    # ------------------------------------------------------------------ #
    # feature dimension changes — no efficient singleton proposal exists for
    # this model (column renormalization couples every row's likelihood), so
    # IBP fitting is unsupported.

    def add_features(self, count: int, rng) -> None:
        raise NotImplementedError(
            "no singleton proposal is available for the count-mixture model; "
            "use the finite Beta-Bernoulli prior"
        )

    def remove_features(self, idx) -> None:
        raise NotImplementedError(
            "no singleton proposal is available for the count-mixture model; "
            "use the finite Beta-Bernoulli prior"
        )
