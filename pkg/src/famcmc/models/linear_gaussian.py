"""Linear Gaussian likelihood: x_n ~ Normal(sum_k z_nk v_k, tau_x^-1 I).

Feature parameters v_k carry a Normal(0, tau_v^-1 I) prior; tau_v and tau_x
carry Gamma(shape, rate) priors and all three are updated by Gibbs kernels.
Missing entries are encoded as NaN in the data matrix and simply drop out of
every sum (valid marginalization under the diagonal covariance).
"""

from __future__ import annotations

import math

import numpy as np

from famcmc.allocation import ContractError, FeatureAllocationMatrix
from famcmc.models.base import LOG_2PI, gamma_logpdf


class LinearGaussianModel:
    def __init__(
        self,
        data,
        feature_params,
        tau_v: float = 1.0,
        tau_x: float = 1.0,
        a_v: float = 1.0,
        b_v: float = 1.0,
        a_x: float = 1.0,
        b_x: float = 1.0,
        flat_likelihood: bool = False,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ContractError("data must be an N x D matrix")
        self.obs_mask = ~np.isnan(self.data)
        self._row_complete = self.obs_mask.all(axis=1)
        self.x_filled = np.where(self.obs_mask, self.data, 0.0)
        self.V = np.atleast_2d(np.asarray(feature_params, dtype=np.float64)).copy()
        if self.V.shape[1] != self.data.shape[1]:
            raise ContractError("feature parameter dimension does not match data")
        if tau_v <= 0 or tau_x <= 0:
            raise ContractError("precisions must be positive")
        self.tau_v = float(tau_v)
        self.tau_x = float(tau_x)
        self.a_v, self.b_v, self.a_x, self.b_x = a_v, b_v, a_x, b_x
        # validation hook: zeroes likelihood evaluations only (fix theta when set)
        self.flat_likelihood = flat_likelihood

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_dims(self) -> int:
        return self.data.shape[1]

    @property
    def n_features(self) -> int:
        return self.V.shape[0]

    # ------------------------------------------------------------------ #
    # likelihood

    def log_lik_rows(self, n: int, candidates, Z=None) -> np.ndarray:
        """Log likelihood of row n's data under each candidate usage row.

        ``candidates`` is a B x K binary matrix; returns a length-B vector.
        """
        cand = np.asarray(candidates)
        if self.flat_likelihood:
            return np.zeros(cand.shape[0])
        if self._row_complete[n]:
            v, x_row, n_obs = self.V, self.x_filled[n], self.n_dims
        else:
            mask = self.obs_mask[n]
            n_obs = int(mask.sum())
            if n_obs == 0:
                return np.zeros(cand.shape[0])
            v, x_row = self.V[:, mask], self.x_filled[n, mask]
        diff = x_row - cand @ v
        return 0.5 * n_obs * (math.log(self.tau_x) - LOG_2PI) - 0.5 * self.tau_x * (
            diff * diff
        ).sum(axis=1)

    def log_lik_row(self, n: int, z_row, Z=None) -> float:
        return float(self.log_lik_rows(n, np.asarray(z_row)[None, :], Z)[0])

    def log_lik_total(self, fa: FeatureAllocationMatrix) -> float:
        if self.flat_likelihood:
            return 0.0
        mean = fa.bits.astype(np.float64) @ self.V
        diff = np.where(self.obs_mask, self.x_filled - mean, 0.0)
        n_obs = int(self.obs_mask.sum())
        return float(
            0.5 * n_obs * (math.log(self.tau_x) - LOG_2PI)
            - 0.5 * self.tau_x * (diff * diff).sum()
        )

    def reconstruct(self, fa: FeatureAllocationMatrix) -> np.ndarray:
        """Point reconstruction sum_k z_nk v_k of the full data matrix."""
        return fa.bits.astype(np.float64) @ self.V

    def log_prior_params(self) -> float:
        k, d = self.V.shape
        lp = 0.5 * k * d * (math.log(self.tau_v) - LOG_2PI) - 0.5 * self.tau_v * (
            self.V**2
        ).sum()
        lp += float(gamma_logpdf(self.tau_v, self.a_v, self.b_v))
        lp += float(gamma_logpdf(self.tau_x, self.a_x, self.b_x))
        return float(lp)

    # ------------------------------------------------------------------ #
    # parameter kernels (all conjugate Gibbs draws)

    def update_params(self, fa: FeatureAllocationMatrix, rng) -> None:
        self._update_features(fa, rng)
        self._update_tau_v(rng)
        self._update_tau_x(fa, rng)

    def _update_features(self, fa: FeatureAllocationMatrix, rng) -> None:
        """Feature-by-feature Gaussian conditional draw of each v_k."""
        zb = fa.bits.astype(np.float64)
        resid = np.where(self.obs_mask, self.x_filled - zb @ self.V, 0.0)
        for k in range(self.n_features):
            z_k = zb[:, k]
            partial = resid + np.where(
                self.obs_mask, np.outer(z_k, self.V[k]), 0.0
            )
            counts = (z_k[:, None] * self.obs_mask).sum(axis=0)
            prec = self.tau_v + self.tau_x * counts
            mean = self.tau_x * (z_k[:, None] * partial).sum(axis=0) / prec
            new_vk = mean + rng.normal(size=self.n_dims) / np.sqrt(prec)
            resid = partial - np.where(self.obs_mask, np.outer(z_k, new_vk), 0.0)
            self.V[k] = new_vk

    def _update_tau_v(self, rng) -> None:
        shape = self.a_v + 0.5 * self.V.size
        rate = self.b_v + 0.5 * (self.V**2).sum()
        self.tau_v = float(rng.gamma(shape, 1.0 / rate))

    def _update_tau_x(self, fa: FeatureAllocationMatrix, rng) -> None:
        mean = fa.bits.astype(np.float64) @ self.V
        diff = np.where(self.obs_mask, self.x_filled - mean, 0.0)
        shape = self.a_x + 0.5 * self.obs_mask.sum()
        rate = self.b_x + 0.5 * (diff * diff).sum()
        self.tau_x = float(rng.gamma(shape, 1.0 / rate))

    # ------------------------------------------------------------------ #
    # feature dimension changes (IBP singleton moves)

    def add_features(self, count: int, rng) -> None:
        if count == 0:
            return
        new = rng.normal(size=(count, self.n_dims)) / math.sqrt(self.tau_v)
        self.V = np.vstack([self.V, new])

    def append_feature_params(self, params) -> None:
        params = np.atleast_2d(np.asarray(params, dtype=np.float64))
        if params.size == 0:
            return
        self.V = np.vstack([self.V, params])

    def remove_features(self, idx) -> None:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        keep = np.setdiff1d(np.arange(self.n_features), idx)
        self.V = self.V[keep]
