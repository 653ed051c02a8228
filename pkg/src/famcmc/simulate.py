"""Forward simulation of datasets from the three likelihood models.

``simulate`` draws an allocation from the prior, feature parameters from
their priors (or explicit overrides for pedagogical setups), data from the
likelihood, and records the log density of the observed data under the
generating parameters.  Datasets round-trip through a self-describing JSON
document (see schemas/dataset.schema.json for the field names).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from famcmc.allocation import ContractError, FeatureAllocationMatrix
from famcmc.models import LinearGaussianModel, PycloneModel, RelationalModel
from famcmc.priors import BetaBernoulliPrior, IndianBuffetPrior

MODELS = ("lg", "lfrm", "pyclone")
SCHEMA_TAG = "famcmc-dataset-v1"


@dataclass
class SimSpec:
    """Settings for one synthetic dataset.

    ``n_cols`` is the data dimension D for the linear Gaussian model and the
    sample count M for the count-mixture model; the relational model's data
    is N x N.  Under the FBB prior the per-column usage probabilities are
    Beta(a, b) draws and ``alpha`` is carried only as a simulation-time
    nuisance; under the IBP the allocation is grown by the sequential
    predictive with mass ``alpha``.
    """

    model: str = "lg"
    prior: str = "fbb"
    n_rows: int = 100
    n_cols: int = 10
    n_features: int = 5
    a: float = 1.0
    b: float = 1.0
    alpha: float = 2.0
    tau_v: float = 0.25
    tau_x: float = 25.0
    tau: float = 0.25
    symmetric: bool = False
    a_v: float = 1.0
    b_v: float = 1.0
    depth: int = 100
    error_rate: float = 0.01
    het_vaf: float = 0.5
    missing_fraction: float = 0.0
    seed: int = 0
    z_override: list | None = None
    v_override: list | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ContractError(f"unknown model {self.model!r}")
        if self.prior not in ("fbb", "ibp"):
            raise ContractError(f"unknown prior {self.prior!r}")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ContractError("missing fraction must lie in [0, 1)")
        if min(self.n_rows, self.n_cols, self.n_features) < 1:
            raise ContractError("counts must be positive")
        if self.model == "pyclone" and self.prior == "ibp":
            raise ContractError(
                "the count-mixture model has no singleton move; use the FBB prior"
            )


@dataclass
class Dataset:
    """A simulated dataset with held-out entries and the generating truth."""

    model: str
    prior: str
    data: dict
    truth: dict
    heldout: dict | None = None
    sim: dict | None = None

    @property
    def n_rows(self) -> int:
        key = "b" if self.model == "pyclone" else "x"
        return len(self.data[key])

    def truth_allocation(self) -> FeatureAllocationMatrix:
        return FeatureAllocationMatrix(np.asarray(self.truth["z"], dtype=np.int8))

    # ---------------------------------------------------------------- JSON

    def to_json(self, path) -> None:
        doc = {
            "schema": SCHEMA_TAG,
            "model": self.model,
            "prior": self.prior,
            "data": {k: _nan_to_null(np.asarray(v)) for k, v in self.data.items()},
            "ground_truth": _jsonable(self.truth),
            "heldout": _jsonable(self.heldout) if self.heldout else None,
            "sim": self.sim,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def from_json(cls, path) -> "Dataset":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("schema") != SCHEMA_TAG:
            raise ContractError(f"not a {SCHEMA_TAG} document")
        data = {
            k: np.array(
                [[np.nan if x is None else x for x in row] for row in v], dtype=float
            )
            for k, v in doc["data"].items()
        }
        if doc["model"] == "pyclone":
            data = {k: v.astype(np.int64) for k, v in data.items()}
        heldout = doc.get("heldout")
        if heldout:
            heldout = {k: np.asarray(v) for k, v in heldout.items()}
        return cls(
            model=doc["model"],
            prior=doc["prior"],
            data=data,
            truth=doc["ground_truth"],
            heldout=heldout,
            sim=doc.get("sim"),
        )


def _nan_to_null(a: np.ndarray):
    out = a.astype(object)
    if a.dtype.kind == "f":
        out[np.isnan(a)] = None
    return out.tolist()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    return obj


# -------------------------------------------------------------------------- #
# allocation draws


def draw_fbb_allocation(n_rows, n_features, a, b, rng) -> FeatureAllocationMatrix:
    """Explicit Beta-then-Bernoulli draw, column by column."""
    probs = rng.beta(a, b, size=n_features)
    bits = (rng.uniform(size=(n_rows, n_features)) < probs).astype(np.int8)
    return FeatureAllocationMatrix(bits)


def draw_ibp_allocation(n_rows, alpha, rng, max_retries: int = 100) -> FeatureAllocationMatrix:
    """Sequential-predictive draw; retries degenerate all-empty outcomes."""
    for _ in range(max_retries):
        cols: list[np.ndarray] = []
        for n in range(n_rows):
            for col in cols:
                col[n] = rng.uniform() < col[:n].sum() / (n + 1)
            for _ in range(rng.poisson(alpha / (n + 1))):
                col = np.zeros(n_rows, dtype=np.int8)
                col[n] = 1
                cols.append(col)
        if cols:
            fa = FeatureAllocationMatrix(np.column_stack(cols))
            fa.prune_empty_columns()
            if fa.n_cols:
                return fa
    raise ContractError(f"no non-empty allocation drawn in {max_retries} attempts")


# -------------------------------------------------------------------------- #
# simulation


def simulate(spec: SimSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    if spec.z_override is not None:
        Z = FeatureAllocationMatrix(np.asarray(spec.z_override, dtype=np.int8))
    elif spec.prior == "fbb":
        Z = draw_fbb_allocation(spec.n_rows, spec.n_features, spec.a, spec.b, rng)
    else:
        Z = draw_ibp_allocation(spec.n_rows, spec.alpha, rng)
    n, k = Z.n_rows, Z.n_cols

    if spec.model == "lg":
        V = (
            np.asarray(spec.v_override, dtype=float).reshape(k, spec.n_cols)
            if spec.v_override is not None
            else rng.normal(size=(k, spec.n_cols)) / math.sqrt(spec.tau_v)
        )
        x = Z.bits @ V + rng.normal(size=(n, spec.n_cols)) / math.sqrt(spec.tau_x)
        x, heldout = mask_missing(x, spec.missing_fraction, rng)
        model = LinearGaussianModel(x, V, tau_v=spec.tau_v, tau_x=spec.tau_x)
        truth_params = {"V": V, "tau_v": spec.tau_v, "tau_x": spec.tau_x}
        data = {"x": x}
    elif spec.model == "lfrm":
        W = rng.normal(size=(k, k)) / math.sqrt(spec.tau)
        if spec.symmetric:
            W = np.triu(W) + np.triu(W, 1).T
        logits = Z.bits.astype(float) @ W @ Z.bits.T.astype(float)
        x = (rng.uniform(size=(n, n)) < 1.0 / (1.0 + np.exp(-logits))).astype(float)
        x, heldout = mask_missing(x, spec.missing_fraction, rng)
        model = RelationalModel(x, W, tau=spec.tau, symmetric=spec.symmetric)
        truth_params = {"W": W, "tau": spec.tau}
        data = {"x": x}
    else:  # pyclone
        v = rng.gamma(spec.a_v, 1.0 / spec.b_v, size=(k, spec.n_cols))
        f = v / v.sum(axis=0)
        phi = Z.bits @ f
        xi = spec.error_rate + (spec.het_vaf - spec.error_rate) * phi
        d = np.full((n, spec.n_cols), spec.depth, dtype=np.int64)
        b = rng.binomial(d, xi)
        model = PycloneModel(
            b, d, v, error_rate=spec.error_rate, het_vaf=spec.het_vaf
        )
        truth_params = {"v": v, "a_v": spec.a_v, "b_v": spec.b_v}
        heldout = None
        data = {"b": b, "d": d}

    log_density = model.log_lik_total(Z)
    truth = {
        "z": Z.bits,
        "params": truth_params,
        "log_density": log_density,
    }
    return Dataset(
        model=spec.model,
        prior=spec.prior,
        data=data,
        truth=_jsonable(truth),
        heldout=heldout,
        sim=asdict(spec),
    )


def mask_missing(data: np.ndarray, fraction: float, rng):
    """Mask floor(fraction * size) entries uniformly without replacement.

    Returns the masked copy (NaN entries) and the held-out index/value
    record used for reconstruction error.
    """
    if not 0.0 <= fraction < 1.0:
        raise ContractError("missing fraction must lie in [0, 1)")
    if fraction == 0.0:
        return data, None
    n_mask = int(math.floor(fraction * data.size))
    flat = rng.choice(data.size, size=n_mask, replace=False)
    rows, cols = np.unravel_index(flat, data.shape)
    out = data.astype(float).copy()
    held = {"rows": rows, "cols": cols, "values": data[rows, cols].copy()}
    out[rows, cols] = np.nan
    return out, held
