"""Latent feature relational likelihood over a binary interaction matrix.

Each observed pair (i, j) is Bernoulli with success probability
sigma(z_i^T W z_j); the weight matrix W carries independent Normal(0, tau^-1)
priors (mirrored when symmetric) and is updated entry-wise by random-walk MH
against a cached logit matrix.  tau gets a log-scale random-walk MH move.
Missing pairs are NaN in the data matrix and are skipped.
"""

from __future__ import annotations

import math

import numpy as np

from famcmc.allocation import ContractError, FeatureAllocationMatrix
from famcmc.models.base import bernoulli_logit_logpmf, gamma_logpdf, normal_logpdf


class RelationalModel:
    def __init__(
        self,
        data,
        weights,
        tau: float = 1.0,
        symmetric: bool = False,
        a: float = 1.0,
        b: float = 1.0,
        rw_step: float = 0.5,
        flat_likelihood: bool = False,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        n = self.data.shape[0]
        if self.data.shape != (n, n):
            raise ContractError("relational data must be an N x N matrix")
        self.obs_mask = ~np.isnan(self.data)
        self.x_filled = np.where(self.obs_mask, self.data, 0.0)
        self.W = np.atleast_2d(np.asarray(weights, dtype=np.float64)).copy()
        if self.W.shape[0] != self.W.shape[1]:
            raise ContractError("weight matrix must be square")
        if symmetric and not np.allclose(self.W, self.W.T):
            raise ContractError("symmetric mode requires a symmetric weight matrix")
        if tau <= 0:
            raise ContractError("precision must be positive")
        self.tau = float(tau)
        self.symmetric = symmetric
        self.a, self.b = a, b
        self.rw_step = rw_step
        self.flat_likelihood = flat_likelihood

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_features(self) -> int:
        return self.W.shape[0]

    # ------------------------------------------------------------------ #
    # likelihood

    def log_lik_rows(self, n: int, candidates, Z: FeatureAllocationMatrix) -> np.ndarray:
        """Log likelihood of all observed pairs involving entity n, for each
        candidate usage row of entity n.  Other entities' rows come from Z."""
        cand = np.asarray(candidates, dtype=np.float64)
        if self.flat_likelihood:
            return np.zeros(cand.shape[0])
        zb = Z.bits.astype(np.float64)
        a_mat = cand @ self.W                      # B x K
        out_logits = a_mat @ zb.T                  # pairs (n, j)
        in_logits = cand @ (zb @ self.W).T         # pairs (j, n)
        diag_logits = (a_mat * cand).sum(axis=1)   # pair (n, n)

        out_mask = self.obs_mask[n].copy()
        out_mask[n] = False
        in_mask = self.obs_mask[:, n].copy()
        in_mask[n] = False

        ll = bernoulli_logit_logpmf(
            self.x_filled[n, out_mask], out_logits[:, out_mask]
        ).sum(axis=1)
        ll += bernoulli_logit_logpmf(
            self.x_filled[in_mask, n], in_logits[:, in_mask]
        ).sum(axis=1)
        if self.obs_mask[n, n]:
            ll += bernoulli_logit_logpmf(self.x_filled[n, n], diag_logits)
        return ll

    def log_lik_row(self, n: int, z_row, Z: FeatureAllocationMatrix) -> float:
        return float(self.log_lik_rows(n, np.asarray(z_row)[None, :], Z)[0])

    def logits(self, fa: FeatureAllocationMatrix) -> np.ndarray:
        zb = fa.bits.astype(np.float64)
        return zb @ self.W @ zb.T

    def edge_probs(self, fa: FeatureAllocationMatrix) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logits(fa)))

    def log_lik_total(self, fa: FeatureAllocationMatrix) -> float:
        if self.flat_likelihood:
            return 0.0
        logits = self.logits(fa)
        terms = bernoulli_logit_logpmf(self.x_filled, logits)
        return float(terms[self.obs_mask].sum())

    def log_prior_params(self) -> float:
        lp = float(gamma_logpdf(self.tau, self.a, self.b))
        lp += float(normal_logpdf(self._free_weights(), 0.0, self.tau).sum())
        return lp

    def _free_weights(self) -> np.ndarray:
        if not self.symmetric:
            return self.W.reshape(-1)
        iu = np.triu_indices(self.n_features)
        return self.W[iu]

    def _weight_indices(self):
        k = self.n_features
        if self.symmetric:
            return [(i, j) for i in range(k) for j in range(i, k)]
        return [(i, j) for i in range(k) for j in range(k)]

    # ------------------------------------------------------------------ #
    # parameter kernels

    def update_params(self, fa: FeatureAllocationMatrix, rng) -> None:
        self._update_weights(fa, rng)
        self._update_tau(rng)

    def _update_weights(self, fa: FeatureAllocationMatrix, rng) -> None:
        zb = fa.bits.astype(np.float64)
        logits = zb @ self.W @ zb.T
        for k, l in self._weight_indices():
            delta = self.rw_step * rng.normal()
            new = self.W[k, l] + delta
            change = np.outer(zb[:, k], zb[:, l])
            if self.symmetric and k != l:
                change = change + change.T
            log_ratio = self._pair_loglik_delta(logits, delta * change)
            log_ratio += -0.5 * self.tau * (new**2 - self.W[k, l] ** 2)
            if math.log(rng.uniform()) < log_ratio:
                self.W[k, l] = new
                if self.symmetric:
                    self.W[l, k] = new
                logits += delta * change

    def _pair_loglik_delta(self, logits, change) -> float:
        if self.flat_likelihood:
            return 0.0
        touched = (change != 0) & self.obs_mask
        if not touched.any():
            return 0.0
        x = self.x_filled[touched]
        cur = logits[touched]
        return float(
            bernoulli_logit_logpmf(x, cur + change[touched]).sum()
            - bernoulli_logit_logpmf(x, cur).sum()
        )

    def _update_tau(self, rng) -> None:
        w = self._free_weights()

        def log_target(tau):
            return float(
                gamma_logpdf(tau, self.a, self.b) + normal_logpdf(w, 0.0, tau).sum()
            )

        prop = self.tau * math.exp(self.rw_step * rng.normal())
        log_ratio = (
            log_target(prop) - log_target(self.tau) + math.log(prop) - math.log(self.tau)
        )
        if math.log(rng.uniform()) < log_ratio:
            self.tau = prop

    # ------------------------------------------------------------------ #
    # feature dimension changes (IBP singleton moves)

    def add_features(self, count: int, rng) -> None:
        """Grow W by ``count`` features with prior-drawn interaction weights."""
        if count == 0:
            return
        k = self.n_features
        new_k = k + count
        grown = np.zeros((new_k, new_k))
        grown[:k, :k] = self.W
        sd = 1.0 / math.sqrt(self.tau)
        if self.symmetric:
            grown[k:, :k] = rng.normal(size=(count, k)) * sd
            grown[:k, k:] = grown[k:, :k].T
            block = rng.normal(size=(count, count)) * sd
            grown[k:, k:] = np.triu(block) + np.triu(block, 1).T
        else:
            grown[k:, :] = rng.normal(size=(count, new_k)) * sd
            grown[:k, k:] = rng.normal(size=(k, count)) * sd
        self.W = grown

    def remove_features(self, idx) -> None:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        keep = np.setdiff1d(np.arange(self.n_features), idx)
        self.W = self.W[np.ix_(keep, keep)]
