"""Feature allocation matrices, feature-order permutations and canonical forms.

A feature allocation over N data points is represented by a binary N x K
matrix Z whose rows are data points and whose columns are features.  The
matrix is only identified up to a permutation of its columns; the left-ordered
form provides a canonical representative of that equivalence class.

Rows of Z ("feature usage vectors") are plain 1-d ``int8`` numpy arrays
throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ContractError(ValueError):
    """An operation was called with arguments violating its precondition."""


def _as_bits(a) -> np.ndarray:
    bits = np.asarray(a)
    if bits.size:
        if bits.dtype == np.int8:
            if int(bits.min()) < 0 or int(bits.max()) > 1:
                raise ContractError("entries of a feature allocation must be 0 or 1")
            return bits
        if not np.isin(bits, (0, 1)).all():
            raise ContractError("entries of a feature allocation must be 0 or 1")
    return bits.astype(np.int8)


class FeatureAllocationMatrix:
    """Binary matrix Z with cached per-column usage counts m_k.

    Mutable, but confined to a single chain: safe to hand between threads,
    not safe for concurrent mutation.  ``col_counts[k] == bits[:, k].sum()``
    is maintained by every mutator.
    """

    __slots__ = ("bits", "col_counts")

    def __init__(self, bits):
        self.bits = _as_bits(bits)
        if self.bits.ndim != 2:
            raise ContractError("feature allocation must be a 2-d matrix")
        self.col_counts = self.bits.sum(axis=0, dtype=np.int64)

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "FeatureAllocationMatrix":
        return cls(np.zeros((n_rows, n_cols), dtype=np.int8))

    @property
    def n_rows(self) -> int:
        return self.bits.shape[0]

    @property
    def n_cols(self) -> int:
        return self.bits.shape[1]

    def copy(self) -> "FeatureAllocationMatrix":
        out = FeatureAllocationMatrix.__new__(FeatureAllocationMatrix)
        out.bits = self.bits.copy()
        out.col_counts = self.col_counts.copy()
        return out

    def row(self, n: int) -> np.ndarray:
        return self.bits[n].copy()

    def set_row(self, n: int, new_row) -> None:
        new_row = _as_bits(new_row)
        if new_row.shape != (self.n_cols,):
            raise ContractError(
                f"row length {new_row.shape} does not match K={self.n_cols}"
            )
        self.col_counts += new_row - self.bits[n]  # differences lie in {-1,0,1}
        self.bits[n] = new_row

    def col_counts_excluding(self, n: int) -> np.ndarray:
        """m_k^(-n): column counts with row n removed."""
        return self.col_counts - self.bits[n]

    def add_singleton_columns(self, n: int, count: int) -> None:
        """Append ``count`` new columns used only by row n."""
        if count < 0:
            raise ContractError("count must be nonnegative")
        if count == 0:
            return
        new = np.zeros((self.n_rows, count), dtype=np.int8)
        new[n] = 1
        self.bits = np.hstack([self.bits, new])
        self.col_counts = np.concatenate(
            [self.col_counts, np.ones(count, dtype=np.int64)]
        )

    def remove_columns(self, idx) -> None:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        keep = np.setdiff1d(np.arange(self.n_cols), idx)
        self.bits = self.bits[:, keep]
        self.col_counts = self.col_counts[keep]

    def prune_empty_columns(self) -> np.ndarray:
        """Drop columns with m_k == 0; returns the removed column indices."""
        empty = np.flatnonzero(self.col_counts == 0)
        if empty.size:
            self.remove_columns(empty)
        return empty

    def singleton_columns(self, n: int) -> np.ndarray:
        """Columns used by row n and nobody else."""
        return np.flatnonzero((self.col_counts_excluding(n) == 0) & (self.bits[n] == 1))

    def validate(self) -> None:
        assert np.isin(self.bits, (0, 1)).all()
        assert np.array_equal(self.col_counts, self.bits.sum(axis=0))

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureAllocationMatrix) and np.array_equal(
            self.bits, other.bits
        )

    def __repr__(self) -> str:
        return f"FeatureAllocationMatrix(n_rows={self.n_rows}, n_cols={self.n_cols})"


@dataclass(frozen=True)
class Permutation:
    """A bijection on {0, ..., K-1} with its inverse.

    ``apply(v)[s] == v[forward[s]]``; applying ``forward`` then ``inverse``
    is the identity.
    """

    forward: np.ndarray
    inverse: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        fwd = np.asarray(self.forward, dtype=np.int64)
        k = fwd.size
        if not np.array_equal(np.sort(fwd), np.arange(k)):
            raise ContractError("forward map is not a bijection on {0..K-1}")
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "inverse", np.argsort(fwd))

    @classmethod
    def _trusted(cls, forward: np.ndarray) -> "Permutation":
        # fast path for internally generated bijections (skips validation)
        out = object.__new__(cls)
        object.__setattr__(out, "forward", forward)
        object.__setattr__(out, "inverse", np.argsort(forward))
        return out

    @classmethod
    def identity(cls, k: int) -> "Permutation":
        return cls._trusted(np.arange(k))

    @classmethod
    def random(cls, k: int, rng: np.random.Generator) -> "Permutation":
        return cls._trusted(rng.permutation(k))

    @property
    def size(self) -> int:
        return self.forward.size

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v)
        if v.shape[-1] != self.size:
            raise ContractError("vector length does not match permutation size")
        return v[..., self.forward]

    def apply_inverse(self, v) -> np.ndarray:
        v = np.asarray(v)
        if v.shape[-1] != self.size:
            raise ContractError("vector length does not match permutation size")
        return v[..., self.inverse]


def apply_permutation(v, perm: Permutation) -> np.ndarray:
    """Return (v_{sigma(1)}, ..., v_{sigma(K)})."""
    return perm.apply(v)


def inverse_permutation(perm: Permutation) -> Permutation:
    return Permutation(perm.inverse)


def left_order_form(fa: FeatureAllocationMatrix) -> FeatureAllocationMatrix:
    """Canonical representative of the column-permutation equivalence class.

    Columns are ordered so that, read as big-endian binary numbers with row 0
    most significant, they decrease from left to right; ties keep their
    original relative order (stable), so the map is constant on
    column-permutation orbits and idempotent.
    """
    bits = fa.bits
    if bits.shape[1] <= 1:
        return fa.copy()
    # lexsort: last key is primary; negate for descending order.
    keys = tuple(-bits[i] for i in range(bits.shape[0] - 1, -1, -1))
    order = np.lexsort(keys)
    return FeatureAllocationMatrix(bits[:, order])


def complete_row(
    sampled_prefix, test_path, perm: Permutation, t: int
) -> np.ndarray:
    """Merge a sampled prefix with test-path values into a full usage row.

    Positions ``perm.forward[:t]`` (the features visited during the first t
    steps) carry the sampled bits; every other position carries the test-path
    bit for that feature.  ``test_path`` is indexed in original feature order.
    """
    prefix = np.asarray(sampled_prefix, dtype=np.int8)
    path = np.asarray(test_path, dtype=np.int8)
    k = perm.size
    if path.shape != (k,):
        raise ContractError("test path length does not match permutation size")
    if not 0 <= t <= k or prefix.shape != (t,):
        raise ContractError(f"prefix of length {prefix.shape} invalid for t={t}, K={k}")
    out = path.copy()
    out[perm.forward[:t]] = prefix
    return out
