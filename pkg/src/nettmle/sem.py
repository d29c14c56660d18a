"""Structural model specification, forward simulation, and summary features.

Summary terms are written in a small textual language:

    PA              own value of covariate column PA
    X               own treatment (allowed in outcome-side terms only)
    sum(PA)         sum of PA over network neighbors
    mean(PA)        mean over neighbors (0 for isolated nodes)
    max(PA)         max over neighbors (0 for isolated nodes)
    degree          node degree
    sum(X)*sum(PA)  product of two terms

Treatment-side terms (producing W) may only reference covariates and degree;
outcome-side terms (producing V) may additionally reference X. Neighbor
reductions over an empty neighbor set are 0 by convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import SpecificationError
from .graph import Network
from .seeds import SIM, child_rng

# ---------------------------------------------------------------------------
# summary terms


def _neighbor_max(adj: sp.csr_matrix, vals: np.ndarray) -> np.ndarray:
    out = np.zeros_like(vals, dtype=np.float64)
    indptr, indices = adj.indptr, adj.indices
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    if nonempty.size == 0:
        return out
    for d in range(vals.shape[0]):
        gathered = vals[d, indices]
        out[d, nonempty] = np.maximum.reduceat(gathered, indptr[nonempty])
    return out


def _eval_atom(atom: str, net: Network, C: dict, X: np.ndarray | None) -> np.ndarray:
    """Evaluate one non-product term to a (draws, n) float array."""
    adj = net.adjacency
    if atom == "degree":
        base = net.degree.astype(np.float64)[None, :]
        reps = 1 if X is None else X.shape[0]
        return np.broadcast_to(base, (reps, net.n)).copy() if reps > 1 else base.copy()

    reduction = None
    col = atom
    for red in ("sum", "mean", "max"):
        if atom.startswith(red + "(") and atom.endswith(")"):
            reduction, col = red, atom[len(red) + 1:-1]
            break

    if col == "X":
        if X is None:
            raise SpecificationError(f"term {atom!r} references X in a covariate-only context")
        vals = np.atleast_2d(np.asarray(X, dtype=np.float64))
    elif col in C:
        arr = np.asarray(C[col], dtype=np.float64)
        vals = arr if arr.ndim == 2 else arr[None, :]   # columns may be batched
        if X is not None and X.ndim == 2 and X.shape[0] > 1 and vals.shape[0] == 1:
            vals = np.broadcast_to(vals, (X.shape[0], net.n))
    else:
        raise SpecificationError(f"unknown column {col!r} in term {atom!r}")

    if reduction is None:
        return np.array(vals, dtype=np.float64)
    if reduction == "sum":
        return np.asarray(vals @ adj)
    if reduction == "mean":
        deg = net.degree.astype(np.float64)
        safe = np.where(deg > 0, deg, 1.0)
        return np.asarray(vals @ adj) / safe[None, :]
    return _neighbor_max(adj, np.ascontiguousarray(vals))


def eval_term(term: str, net: Network, C: dict, X: np.ndarray | None = None) -> np.ndarray:
    """Evaluate a term (possibly a product) to a (draws, n) float array."""
    factors = [t.strip() for t in term.split("*")]
    out = _eval_atom(factors[0], net, C, X)
    for f in factors[1:]:
        out = out * _eval_atom(f, net, C, X)
    return out


def eval_terms(terms, net: Network, C: dict, X: np.ndarray | None = None) -> np.ndarray:
    """Stack terms into a (draws, n, p) array."""
    cols = [eval_term(t, net, C, X) for t in terms]
    draws = max(c.shape[0] for c in cols)
    cols = [np.broadcast_to(c, (draws, net.n)) for c in cols]
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class SummarySpec:
    """Treatment-side terms produce W, outcome-side terms produce V."""

    w_terms: tuple
    v_terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "w_terms", tuple(self.w_terms))
        object.__setattr__(self, "v_terms", tuple(self.v_terms))
        for t in self.w_terms:
            for atom in t.split("*"):
                if atom.strip() == "X" or atom.strip() in ("sum(X)", "mean(X)", "max(X)"):
                    raise SpecificationError(f"treatment-side term {t!r} may not reference X")


def apply_summaries(net: Network, summaries: SummarySpec, C: dict, X: np.ndarray):
    """Compute (W, V) for a single treatment vector. Pure function of inputs."""
    X1 = np.asarray(X, dtype=np.float64)[None, :]
    W = eval_terms(summaries.w_terms, net, C)[0]
    V = eval_terms(summaries.v_terms, net, C, X1)[0]
    return W, V


# ---------------------------------------------------------------------------
# structural model


@dataclass(frozen=True)
class LogisticLaw:
    """Bernoulli conditional law: logit p = intercept + sum coef[term]*term."""

    intercept: float
    coefs: dict = field(default_factory=dict)

    def linear_predictor(self, terms, design: np.ndarray) -> np.ndarray:
        unknown = set(self.coefs) - set(terms)
        if unknown:
            raise SpecificationError(f"law references terms not in the summary spec: {sorted(unknown)}")
        eta = np.full(design.shape[:-1], self.intercept, dtype=np.float64)
        for name, beta in self.coefs.items():
            eta += beta * design[..., terms.index(name)]
        return eta


@dataclass(frozen=True)
class FixedFraction:
    """Randomize treatment to exactly floor(fraction * n) nodes."""

    fraction: float


@dataclass(frozen=True)
class LatentConfig:
    """Unobserved standard-normal U_i entering the outcome linear predictor as
    loading_own*U_i + loading_friends*sum of neighbor U_j. The influence range
    is exactly one tie, so induced outcome dependence spans at most two ties."""

    loading_own: float
    loading_friends: float


@dataclass(frozen=True)
class SemSpec:
    covariate_law: dict            # column name -> Bernoulli probability
    treatment_law: object          # LogisticLaw over w_terms, or FixedFraction
    outcome_law: LogisticLaw       # over v_terms
    latent: LatentConfig | None = None


@dataclass
class Dataset:
    net: Network
    summaries: SummarySpec
    C: dict
    X: np.ndarray
    Y: np.ndarray
    W: np.ndarray
    V: np.ndarray

    @property
    def n(self) -> int:
        return self.net.n


def expit(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    return np.log(p / (1.0 - p))


def draw_covariates(spec: SemSpec, n: int, rng) -> dict:
    return {name: (rng.random(n) < p).astype(np.int64) for name, p in spec.covariate_law.items()}


def draw_treatment(spec: SemSpec, net: Network, C: dict, rng, summaries: SummarySpec) -> np.ndarray:
    law = spec.treatment_law
    if isinstance(law, FixedFraction):
        k = int(np.floor(law.fraction * net.n))
        x = np.zeros(net.n, dtype=np.int64)
        x[rng.permutation(net.n)[:k]] = 1
        return x
    W = eval_terms(summaries.w_terms, net, C)[0]
    p = expit(law.linear_predictor(list(summaries.w_terms), W))
    return (rng.random(net.n) < p).astype(np.int64)


def outcome_probability(spec: SemSpec, net: Network, V: np.ndarray, summaries: SummarySpec,
                        U: np.ndarray | None = None) -> np.ndarray:
    """P(Y=1 | V, U) under the structural outcome law. V may be (n, p) or
    (draws, n, p)."""
    eta = spec.outcome_law.linear_predictor(list(summaries.v_terms), V)
    if spec.latent is not None:
        if U is None:
            raise SpecificationError("latent config present but no latent draw supplied")
        # U @ adjacency equals adjacency @ U (symmetry) and also handles
        # batched U of shape (draws, n)
        eta = eta + spec.latent.loading_own * U + spec.latent.loading_friends * (U @ net.adjacency)
    return expit(eta)


def simulate(net: Network, spec: SemSpec, summaries: SummarySpec, seed: int) -> Dataset:
    """Sequentially draw C, X, Y on the network. Deterministic given seed."""
    rng = child_rng(seed, SIM)
    C = draw_covariates(spec, net.n, rng)
    X = draw_treatment(spec, net, C, rng, summaries)
    W, V = apply_summaries(net, summaries, C, X)
    U = rng.standard_normal(net.n) if spec.latent is not None else None
    p = outcome_probability(spec, net, V, summaries, U)
    Y = (rng.random(net.n) < p).astype(np.int64)
    return Dataset(net=net, summaries=summaries, C=C, X=X, Y=Y, W=W, V=V)
