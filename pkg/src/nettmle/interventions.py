"""Deterministic, dynamic, stochastic, and network-topology interventions.

An intervention resolves, per Monte Carlo draw, to an effective network and a
counterfactual treatment vector X*; counterfactual summaries V* are the
outcome-side summary terms applied to (C, X*) under the effective network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, NotIdentifiedError, SpecificationError
from .graph import Network
from .sem import SummarySpec, eval_terms
from .seeds import INTERVENTION, child_rng


class Intervention:
    """Base class; subclasses define how X* (and possibly A*) arise."""

    stochastic = False  # True if X* varies across draws

    def describe(self) -> str:
        return type(self).__name__


@dataclass(frozen=True, eq=False)
class Deterministic(Intervention):
    """Set X to a fixed user-given vector."""

    x_star: np.ndarray

    def describe(self):
        return "deterministic"


@dataclass(frozen=True)
class Dynamic(Intervention):
    """Treatment is a deterministic rule of node covariates (which may include
    lagged outcome columns) evaluated on the effective network."""

    rule: object  # callable (C: dict, net: Network) -> 0/1 vector
    name: str = "dynamic"

    def describe(self):
        return self.name


@dataclass(frozen=True)
class Stochastic(Intervention):
    """Replace the treatment-side summary (and optionally the outcome-side
    summary) while keeping the treatment mechanism's stochasticity: X*_i is
    drawn from the fitted treatment model evaluated at the new W*_i."""

    w_terms: tuple | None = None  # None: keep the observed summary spec
    v_terms: tuple | None = None

    stochastic = True

    def describe(self):
        return "stochastic"


@dataclass(frozen=True)
class BernoulliP(Intervention):
    """Assign treatment independently with a constant probability."""

    p: float

    stochastic = True

    def describe(self):
        return f"bernoulli:{self.p:g}"


@dataclass(frozen=True)
class TopDegree(Intervention):
    """Treat the top fraction of nodes by degree; ties at the cutoff broken by
    lowest node id."""

    fraction: float

    def describe(self):
        return f"topdegree:{self.fraction:g}"


@dataclass(frozen=True)
class AddActiveFriend(Intervention):
    """For every node with degree below max_degree, add a tie to the
    highest-degree non-neighbor with active_col = 1 (ties by lowest id)."""

    max_degree: int
    active_col: str = "PA"

    def describe(self):
        return f"addfriend:{self.max_degree}"


@dataclass(frozen=True)
class NetworkRewire(Intervention):
    """Replace the observed network with a user-specified one, or with draws
    from a sampler over a class of networks."""

    net_star: Network | None = None
    sampler: object = None  # callable rng -> Network

    def __post_init__(self):
        if (self.net_star is None) == (self.sampler is None):
            raise InvalidParameterError("provide exactly one of net_star or sampler")

    @property
    def stochastic(self):  # type: ignore[override]
        return self.sampler is not None

    def describe(self):
        return "rewire"


@dataclass(frozen=True)
class Compose(Intervention):
    """Apply network rewires first, then the (single) treatment-assigning part
    evaluated on the rewired network."""

    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def stochastic(self):  # type: ignore[override]
        return any(p.stochastic for p in self.parts)

    def describe(self):
        return "+".join(p.describe() for p in self.parts)


@dataclass(frozen=True)
class CentralityTarget(Intervention):
    """Placeholder for centrality-targeted rewires; never identified."""

    measure: str = "betweenness"


def _top_degree_vector(net: Network, fraction: float) -> np.ndarray:
    k = int(np.floor(fraction * net.n))
    # sort by (-degree, id); stable lowest-id tie-break
    order = np.lexsort((np.arange(net.n), -net.degree))
    x = np.zeros(net.n, dtype=np.int64)
    x[order[:k]] = 1
    return x


def _add_active_friend(net: Network, C: dict, iv: AddActiveFriend) -> Network:
    if iv.active_col not in C:
        raise SpecificationError(f"covariate {iv.active_col!r} not in dataset")
    active = np.asarray(C[iv.active_col]) == 1
    deg = net.degree
    # donor preference: highest degree first, then lowest id
    donors = np.lexsort((np.arange(net.n), -deg))
    donors = [int(d) for d in donors if active[d]]
    new_edges = set(map(tuple, net.edges))
    for i in range(net.n):
        if deg[i] >= iv.max_degree:
            continue
        neigh = set(net.neighbors(i))
        for d in donors:
            if d != i and d not in neigh:
                new_edges.add((min(i, d), max(i, d)))
                break
    return Network.from_edges(net.n, sorted(new_edges))


def resolve_network(net: Network, C: dict, iv: Intervention, rng) -> Network:
    """Effective network after any rewiring parts of the intervention."""
    if isinstance(iv, CentralityTarget):
        raise NotIdentifiedError("interventions on centrality cannot be identified")
    if isinstance(iv, NetworkRewire):
        target = iv.net_star if iv.net_star is not None else iv.sampler(rng)
        if target.n != net.n:
            raise InvalidParameterError("rewired network must keep the node set")
        return target
    if isinstance(iv, AddActiveFriend):
        return _add_active_friend(net, C, iv)
    if isinstance(iv, Compose):
        eff = net
        for part in iv.parts:
            if isinstance(part, (NetworkRewire, AddActiveFriend)):
                eff = resolve_network(eff, C, part, rng)
        return eff
    return net


def _treatment_part(iv: Intervention):
    if isinstance(iv, Compose):
        parts = [p for p in iv.parts if not isinstance(p, (NetworkRewire, AddActiveFriend))]
        if len(parts) > 1:
            raise InvalidParameterError("compose supports at most one treatment-assigning part")
        return parts[0] if parts else None
    if isinstance(iv, (NetworkRewire, AddActiveFriend)):
        return None
    return iv


def draw_x_star(net_eff: Network, C: dict, X_obs: np.ndarray, iv: Intervention,
                g_hat, rng, summaries: SummarySpec) -> np.ndarray:
    """One draw of the counterfactual treatment vector on the effective net."""
    part = _treatment_part(iv)
    if part is None:
        return np.asarray(X_obs, dtype=np.int64)  # pure rewire keeps X
    if isinstance(part, Deterministic):
        x = np.asarray(part.x_star, dtype=np.int64)
        if x.shape != (net_eff.n,):
            raise InvalidParameterError("x_star length mismatch")
        return x
    if isinstance(part, Dynamic):
        return np.asarray(part.rule(C, net_eff), dtype=np.int64)
    if isinstance(part, TopDegree):
        return _top_degree_vector(net_eff, part.fraction)
    if isinstance(part, BernoulliP):
        return (rng.random(net_eff.n) < part.p).astype(np.int64)
    if isinstance(part, Stochastic):
        if g_hat is None:
            raise SpecificationError("stochastic intervention requires a fitted treatment model")
        w_terms = part.w_terms if part.w_terms is not None else summaries.w_terms
        W_star = eval_terms(w_terms, net_eff, C)[0]
        p = g_hat.predict(W_star)
        return (rng.random(net_eff.n) < p).astype(np.int64)
    raise InvalidParameterError(f"unsupported intervention {type(part).__name__}")


@dataclass
class VStarSample:
    """Counterfactual summaries: V_star has shape (draws, n, p)."""

    V_star: np.ndarray
    X_star: np.ndarray            # (draws, n)
    v_terms: tuple
    seed: int = 0


def counterfactual_summaries(net: Network, C: dict, X_obs: np.ndarray, iv: Intervention,
                             summaries: SummarySpec, g_hat=None, draws: int = 1000,
                             seed: int = 0) -> VStarSample:
    """Sample V* under the intervention. Deterministic given seed; collapses
    to a single draw for non-stochastic interventions on a fixed network."""
    if isinstance(iv, CentralityTarget):
        raise NotIdentifiedError("interventions on centrality cannot be identified")
    n_draws = draws if iv.stochastic else 1
    v_terms = summaries.v_terms
    part = _treatment_part(iv)
    if isinstance(part, Stochastic) and part.v_terms is not None:
        v_terms = tuple(part.v_terms)

    rng = child_rng(seed, INTERVENTION)
    if _rewire_is_stochastic(iv):
        xs, vs = [], []
        for _ in range(n_draws):
            eff = resolve_network(net, C, iv, rng)
            x = draw_x_star(eff, C, X_obs, iv, g_hat, rng, summaries)
            xs.append(x)
            vs.append(eval_terms(v_terms, eff, C, x[None, :])[0])
        return VStarSample(V_star=np.stack(vs), X_star=np.stack(xs),
                           v_terms=tuple(v_terms), seed=seed)
    net_eff = resolve_network(net, C, iv, rng)
    X_star = _batch_x_star_draws(net_eff, C, X_obs, iv, g_hat, rng, summaries, n_draws)
    V_star = eval_terms(v_terms, net_eff, C, X_star.astype(np.float64))
    return VStarSample(V_star=V_star, X_star=X_star, v_terms=tuple(v_terms), seed=seed)


def _batch_x_star_draws(net_eff: Network, C: dict, X_obs: np.ndarray, iv: Intervention,
                        g_hat, rng, summaries: SummarySpec, draws: int) -> np.ndarray:
    """(draws, n) counterfactual treatment matrix on a fixed effective network."""
    part = _treatment_part(iv)
    n = net_eff.n
    if part is None or isinstance(part, (Deterministic, Dynamic, TopDegree)):
        one = draw_x_star(net_eff, C, X_obs, iv, g_hat, rng, summaries)
        return np.tile(one, (draws, 1))
    if isinstance(part, BernoulliP):
        return (rng.random((draws, n)) < part.p).astype(np.int64)
    if isinstance(part, Stochastic):
        if g_hat is None:
            raise SpecificationError("stochastic intervention requires a fitted treatment model")
        w_terms = part.w_terms if part.w_terms is not None else summaries.w_terms
        W_star = eval_terms(w_terms, net_eff, C)[0]
        p = g_hat.predict(W_star)
        return (rng.random((draws, n)) < p).astype(np.int64)
    raise InvalidParameterError(f"unsupported intervention {type(part).__name__}")


def _rewire_is_stochastic(iv: Intervention) -> bool:
    if isinstance(iv, NetworkRewire):
        return iv.sampler is not None
    if isinstance(iv, Compose):
        return any(_rewire_is_stochastic(p) for p in iv.parts)
    return False


# ---------------------------------------------------------------------------
# positivity


@dataclass
class PositivityReport:
    passed: bool
    unsupported: list          # (stratum, v tuple) pairs in V* support but never observed
    min_observed_frequency: float
    n_star_values: int

    def __bool__(self):
        return self.passed


def _stratified_rows(V: np.ndarray, strata: np.ndarray) -> np.ndarray:
    out = np.empty((V.shape[0], V.shape[1] + 1), dtype=np.float64)
    out[:, 0] = strata
    out[:, 1:] = np.asarray(V, dtype=np.float64).round(9)
    out[out == 0] = 0.0
    return np.ascontiguousarray(out)


def _unique_view(rows: np.ndarray):
    view = rows.view(np.dtype((np.void, rows.dtype.itemsize * rows.shape[1]))).ravel()
    uniq, counts = np.unique(view, return_counts=True)
    return uniq, counts


def positivity_diagnostic(V_obs: np.ndarray, V_star: np.ndarray,
                          C_strata: np.ndarray | None = None) -> PositivityReport:
    """Flag every counterfactual summary value absent from the observed
    support (per stratum when a stratifier is given). Always returns."""
    V_obs = np.asarray(V_obs)
    flat_star = np.asarray(V_star).reshape(-1, V_star.shape[-1])
    if V_obs.size == 0 or flat_star.size == 0:
        raise InvalidParameterError("positivity diagnostic requires non-empty tables")
    if C_strata is None:
        strata_obs = np.zeros(V_obs.shape[0], dtype=np.int64)
    else:
        strata_obs = np.asarray(C_strata)
    reps = flat_star.shape[0] // strata_obs.shape[0]
    strata_star = np.tile(strata_obs, reps)

    obs_rows = _stratified_rows(V_obs, strata_obs)
    star_rows = _stratified_rows(flat_star, strata_star)
    obs_uniq, obs_counts = _unique_view(obs_rows)
    star_uniq, _ = _unique_view(star_rows)

    idx = np.searchsorted(obs_uniq, star_uniq)
    ok = idx < obs_uniq.shape[0]
    hit = np.zeros(star_uniq.shape[0], dtype=bool)
    hit[ok] = obs_uniq[idx[ok]] == star_uniq[ok]

    stratum_sizes = {int(s): int(np.sum(strata_obs == s)) for s in np.unique(strata_obs)}
    as_rows = star_uniq.view(np.float64).reshape(-1, star_rows.shape[1])
    unsupported = [(int(r[0]), tuple(r[1:])) for r in as_rows[~hit]]
    if hit.any():
        freqs = obs_counts[idx[hit]] / np.array(
            [stratum_sizes[int(r[0])] for r in as_rows[hit]])
        min_freq = float(freqs.min())
    else:
        min_freq = 0.0
    return PositivityReport(
        passed=not unsupported,
        unsupported=sorted(unsupported),
        min_observed_frequency=min_freq if not unsupported else 0.0,
        n_star_values=int(star_uniq.shape[0]),
    )


# ---------------------------------------------------------------------------
# CLI-facing parser


def parse_intervention(text: str) -> Intervention:
    """Parse shorthand like 'bernoulli:0.35', 'topdegree:0.10',
    'addfriend:10', 'identity', or 'a+b' compositions."""
    parts = [p.strip() for p in text.split("+")]
    parsed = []
    for p in parts:
        if p == "identity":
            parsed.append(Stochastic())  # keep observed summaries; draw from fitted g
        elif p.startswith("bernoulli:"):
            parsed.append(BernoulliP(float(p.split(":", 1)[1])))
        elif p.startswith("topdegree:"):
            parsed.append(TopDegree(float(p.split(":", 1)[1])))
        elif p.startswith("addfriend:"):
            parsed.append(AddActiveFriend(int(p.split(":", 1)[1])))
        elif p.startswith("centrality"):
            parsed.append(CentralityTarget())
        else:
            raise InvalidParameterError(f"unknown intervention {p!r}")
    return parsed[0] if len(parsed) == 1 else Compose(tuple(parsed))
