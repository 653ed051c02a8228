"""Evaluation metrics and statistical method-comparison tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, norm

from famcmc.allocation import ContractError


@dataclass
class MetricPoint:
    """One trace record: wall-clock seconds are the accumulated kernel time."""

    wall_clock_s: float
    iteration: int
    log_joint: float
    rel_log_density: float
    model_metric_name: str
    model_metric_value: float


def relative_log_density(ell: float, ell_hat: float) -> float:
    """(ell - ell_hat) / ell_hat, exactly as printed."""
    if ell_hat == 0:
        raise ContractError("reference log density must be nonzero")
    return (ell - ell_hat) / ell_hat


def rmse_heldout(predictions, heldout_values) -> float:
    """Root mean squared error of held-out reconstructions."""
    pred = np.asarray(predictions, dtype=np.float64).ravel()
    held = np.asarray(heldout_values, dtype=np.float64).ravel()
    if pred.size == 0:
        raise ContractError("no held-out entries")
    if pred.shape != held.shape:
        raise ContractError("prediction and held-out sets are misaligned")
    return float(np.sqrt(((pred - held) ** 2).mean()))


def lfrm_reconstruction_error(edge_probs, x_full) -> float:
    """Fraction of all N^2 entries misclassified by thresholding the edge
    probabilities at 0.5 (maximum-probability prediction)."""
    probs = np.asarray(edge_probs, dtype=np.float64)
    x = np.asarray(x_full, dtype=np.float64)
    if probs.shape != x.shape:
        raise ContractError("shape mismatch")
    pred = probs > 0.5
    return float((pred != (x > 0.5)).mean())


def bcubed_fmeasure(inferred_bits, truth_bits) -> tuple[float, float, float]:
    """Extended B-Cubed (precision, recall, F) for overlapping allocations.

    For ordered item pairs (e, e') — self-pairs included — let R be the
    number of shared inferred features and G the number of shared true
    features.  Precision averages min(R, G)/R over pairs with R > 0, recall
    averages min(R, G)/G over pairs with G > 0, and vacuous (empty) averages
    count as zero.  Invariant under column permutations of either argument.
    """
    zi = np.asarray(inferred_bits, dtype=np.int64)
    zt = np.asarray(truth_bits, dtype=np.int64)
    if zi.shape[0] != zt.shape[0]:
        raise ContractError("allocations must cover the same items")
    shared_inf = zi @ zi.T
    shared_tru = zt @ zt.T
    mins = np.minimum(shared_inf, shared_tru)
    inf_pairs = shared_inf > 0
    tru_pairs = shared_tru > 0
    precision = (
        float((mins[inf_pairs] / shared_inf[inf_pairs]).mean()) if inf_pairs.any() else 0.0
    )
    recall = (
        float((mins[tru_pairs] / shared_tru[tru_pairs]).mean()) if tru_pairs.any() else 0.0
    )
    f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f


# --------------------------------------------------------------------------- #
# rank-based comparison tests


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..k with ties sharing the average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def friedman_test(scores) -> tuple[float, float]:
    """Friedman rank test over a methods x blocks score table.

    Uses average ranks for ties and the standard tie-correction divisor; a
    fully tied table yields statistic 0 with p = 1.  Returns (chi-square
    statistic, p-value with k-1 degrees of freedom).
    """
    table = np.asarray(scores, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] < 2:
        raise ContractError("need at least 2 methods and 2 blocks")
    k, n = table.shape
    ranks = np.empty_like(table)
    tie_sum = 0.0
    for j in range(n):
        ranks[:, j] = _average_ranks(table[:, j])
        _, counts = np.unique(table[:, j], return_counts=True)
        tie_sum += float((counts**3 - counts).sum())
    correction = 1.0 - tie_sum / (k * (k * k - 1) * n)
    if correction <= 0.0:
        return 0.0, 1.0
    rank_sums = ranks.sum(axis=1)
    stat = (12.0 / (k * n * (k + 1)) * float((rank_sums**2).sum()) - 3.0 * n * (k + 1))
    stat /= correction
    return float(stat), float(chi2.sf(stat, k - 1))


def nemenyi_posthoc(scores) -> np.ndarray:
    """Bonferroni-corrected pairwise rank-difference tests.

    z_ij = (mean rank i - mean rank j) / sqrt(k(k+1)/(6n)); two-sided normal
    p-values multiplied by the number of pairs, clipped at 1.  Returns the
    symmetric k x k p-value matrix with a unit diagonal.
    """
    table = np.asarray(scores, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] < 2:
        raise ContractError("need at least 2 methods and 2 blocks")
    k, n = table.shape
    ranks = np.column_stack([_average_ranks(table[:, j]) for j in range(n)])
    mean_ranks = ranks.mean(axis=1)
    se = np.sqrt(k * (k + 1) / (6.0 * n))
    z = (mean_ranks[:, None] - mean_ranks[None, :]) / se
    pvals = np.minimum(1.0, 2.0 * norm.sf(np.abs(z)) * (k * (k - 1) / 2))
    np.fill_diagonal(pvals, 1.0)
    return pvals
