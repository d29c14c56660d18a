"""Ground truth for the expected average counterfactual outcome: exact
enumeration on small binary instances and Monte Carlo simulation at scale.
Both work from the true structural model, never from fitted objects, so they
serve as independent checks on the estimator."""

from __future__ import annotations

import itertools
import json
import math
import os
import tempfile

import numpy as np

from .errors import InvalidParameterError, NotIdentifiedError, SpecificationError, TooLargeError
from .graph import Network
from .interventions import (CentralityTarget, Compose, Intervention, Stochastic,
                            _treatment_part, draw_x_star, resolve_network)
from .seeds import TRUTH, child_rng
from .sem import (FixedFraction, LogisticLaw, SemSpec, SummarySpec, draw_covariates,
                  eval_terms, expit, outcome_probability)

CONFIG_CAP = 2 ** 24


def _binary_configs(k: int) -> np.ndarray:
    """(2^k, k) array of all 0/1 vectors."""
    cols = [(np.arange(2 ** k) >> j) & 1 for j in range(k - 1, -1, -1)]
    return np.column_stack(cols).astype(np.int64)


def _config_probability(bits: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Product Bernoulli probability of each row of `bits` under per-slot p."""
    p = np.broadcast_to(np.asarray(p, dtype=np.float64), bits.shape[-1:])
    with np.errstate(divide="ignore"):
        return np.prod(np.where(bits == 1, p, 1.0 - p), axis=-1)


class _NoRandom:
    """Sentinel rng: any use means an intervention is not enumerable."""

    def __getattr__(self, name):
        raise SpecificationError("intervention needs randomness; enumeration cannot handle it")


def _x_star_configs(net_eff: Network, net_obs: Network, C: dict, iv: Intervention,
                    spec: SemSpec, summaries: SummarySpec):
    """All counterfactual treatment vectors with their probabilities for one
    covariate configuration. Returns (configs (k, n), probs (k,))."""
    part = _treatment_part(iv)
    n = net_eff.n
    if part is None or not getattr(part, "stochastic", False) and not isinstance(part, Stochastic):
        if part is None:
            # pure rewire: treatment still follows the observed mechanism,
            # evaluated on the original network
            return _law_configs(spec.treatment_law, net_obs, C, summaries)
        x = draw_x_star(net_eff, C, np.zeros(n, dtype=np.int64), iv, None, _NoRandom(), summaries)
        return x[None, :], np.ones(1)
    if isinstance(part, Stochastic):
        w_terms = part.w_terms if part.w_terms is not None else summaries.w_terms
        if isinstance(spec.treatment_law, FixedFraction):
            return _fraction_configs(spec.treatment_law, n)
        W_star = eval_terms(w_terms, net_eff, C)[0]
        p = expit(spec.treatment_law.linear_predictor(list(w_terms), W_star))
        configs = _binary_configs(n)
        return configs, _config_probability(configs, p)
    # BernoulliP
    configs = _binary_configs(n)
    return configs, _config_probability(configs, part.p)


def _law_configs(law, net: Network, C: dict, summaries: SummarySpec):
    n = net.n
    if isinstance(law, FixedFraction):
        return _fraction_configs(law, n)
    W = eval_terms(summaries.w_terms, net, C)[0]
    p = expit(law.linear_predictor(list(summaries.w_terms), W))
    configs = _binary_configs(n)
    return configs, _config_probability(configs, p)


def _fraction_configs(law: FixedFraction, n: int):
    k = int(np.floor(law.fraction * n))
    subsets = list(itertools.combinations(range(n), k))
    configs = np.zeros((len(subsets), n), dtype=np.int64)
    for r, s in enumerate(subsets):
        configs[r, list(s)] = 1
    return configs, np.full(len(subsets), 1.0 / len(subsets))


def _count_x_configs(iv: Intervention, spec: SemSpec, n: int) -> int:
    part = _treatment_part(iv)
    if part is None:
        if isinstance(spec.treatment_law, FixedFraction):
            return math.comb(n, int(np.floor(spec.treatment_law.fraction * n)))
        return 2 ** n
    if isinstance(part, Stochastic):
        if isinstance(spec.treatment_law, FixedFraction):
            return math.comb(n, int(np.floor(spec.treatment_law.fraction * n)))
        return 2 ** n
    if getattr(part, "stochastic", False):
        return 2 ** n
    return 1


def psi_exact_enumeration(net: Network, spec: SemSpec, summaries: SummarySpec,
                          iv: Intervention) -> float:
    """Exact value by summing over every covariate configuration (and, for
    stochastic interventions, every treatment configuration) weighted by the
    structural probabilities. Binary covariates only; no latent variables."""
    if isinstance(iv, CentralityTarget) or (
            isinstance(iv, Compose) and any(isinstance(p, CentralityTarget) for p in iv.parts)):
        raise NotIdentifiedError("interventions on centrality cannot be identified")
    if spec.latent is not None:
        raise SpecificationError("enumeration does not integrate latent variables")
    n = net.n
    cov_names = list(spec.covariate_law)
    n_c_configs = 2 ** (n * len(cov_names))
    n_x_configs = _count_x_configs(iv, spec, n)
    if n_c_configs * n_x_configs > CONFIG_CAP:
        raise TooLargeError(
            f"{n_c_configs} covariate x {n_x_configs} treatment configurations "
            f"exceed the cap of {CONFIG_CAP}")

    p_cov = np.array([spec.covariate_law[k] for k in cov_names])
    c_bits = _binary_configs(n * len(cov_names))
    psi = 0.0
    v_terms = list(summaries.v_terms)
    for row in c_bits:
        C = {k: row[j * n:(j + 1) * n].copy() for j, k in enumerate(cov_names)}
        pc = float(np.prod([_config_probability(C[k][None, :], p_cov[j])
                            for j, k in enumerate(cov_names)]))
        if pc == 0.0:
            continue
        net_eff = resolve_network(net, C, iv, _NoRandom())
        x_configs, x_probs = _x_star_configs(net_eff, net, C, iv, spec, summaries)
        V_star = eval_terms(summaries.v_terms, net_eff, C, x_configs.astype(np.float64))
        m = expit(spec.outcome_law.linear_predictor(v_terms, V_star))  # (k, n)
        psi += pc * float(x_probs @ m.mean(axis=1))
    return psi


BLOCK = 2000   # replicates simulated per vectorized batch


def _batch_true_x(net: Network, C: dict, spec: SemSpec, summaries: SummarySpec,
                  rng, B: int, w_terms=None) -> np.ndarray:
    """B draws from the true treatment mechanism. Covariate columns may be
    (n,) or batched (B, n)."""
    n = net.n
    law = spec.treatment_law
    if isinstance(law, FixedFraction):
        k = int(np.floor(law.fraction * n))
        x = np.zeros((B, n), dtype=np.float64)
        order = np.argsort(rng.random((B, n)), axis=1)
        np.put_along_axis(x, order[:, :k], 1.0, axis=1)
        return x
    terms = tuple(w_terms) if w_terms is not None else summaries.w_terms
    W = eval_terms(terms, net, C)
    p = expit(law.linear_predictor(list(terms), W))   # (1, n) or (B, n)
    return (rng.random((B, n)) < p).astype(np.float64)


def _batch_x_star(net_eff: Network, net_obs: Network, C: dict, iv: Intervention,
                  spec: SemSpec, summaries: SummarySpec, rng, B: int) -> np.ndarray:
    """B counterfactual treatment draws on the effective network."""
    part = _treatment_part(iv)
    n = net_eff.n
    if part is None:
        # pure rewire: treatment still follows the observed mechanism on the
        # original network
        return _batch_true_x(net_obs, C, spec, summaries, rng, B)
    if isinstance(part, Stochastic):
        return _batch_true_x(net_eff, C, spec, summaries, rng, B, w_terms=part.w_terms)
    from .interventions import BernoulliP, Deterministic, Dynamic, TopDegree, \
        _top_degree_vector
    if isinstance(part, BernoulliP):
        return (rng.random((B, n)) < part.p).astype(np.float64)
    if isinstance(part, TopDegree):
        return np.tile(_top_degree_vector(net_eff, part.fraction).astype(np.float64), (B, 1))
    if isinstance(part, Deterministic):
        return np.tile(np.asarray(part.x_star, dtype=np.float64), (B, 1))
    if isinstance(part, Dynamic):
        batched = any(np.asarray(v).ndim == 2 for v in C.values())
        if not batched:
            return np.tile(np.asarray(part.rule(C, net_eff), dtype=np.float64), (B, 1))
        return np.stack([np.asarray(part.rule({k: np.asarray(v)[b] for k, v in C.items()},
                                              net_eff), dtype=np.float64)
                         for b in range(B)])
    raise SpecificationError(f"unsupported intervention {type(part).__name__}")


def _batched_mean_outcomes(net_eff: Network, net_obs: Network, C: dict, iv: Intervention,
                           spec: SemSpec, summaries: SummarySpec, rng, B: int,
                           probabilities: bool = False) -> np.ndarray:
    """Per-replicate mean intervened outcome for B replicates sharing the
    covariates C (possibly batched columns). With probabilities=True, returns
    the conditional mean instead of sampled-outcome averages."""
    X = _batch_x_star(net_eff, net_obs, C, iv, spec, summaries, rng, B)
    V = eval_terms(summaries.v_terms, net_eff, C, X)
    U = rng.standard_normal((B, net_eff.n)) if spec.latent is not None else None
    p = outcome_probability(spec, net_eff, V, summaries, U)
    p = np.broadcast_to(p, (B, net_eff.n))
    if probabilities:
        return p.mean(axis=1)
    return (rng.random((B, net_eff.n)) < p).mean(axis=1)


def _c_dependent_network(iv: Intervention) -> bool:
    from .interventions import AddActiveFriend
    if isinstance(iv, AddActiveFriend):
        return True
    if isinstance(iv, Compose):
        return any(_c_dependent_network(p) for p in iv.parts)
    return False


def _stochastic_rewire(iv: Intervention) -> bool:
    from .interventions import _rewire_is_stochastic
    return _rewire_is_stochastic(iv)


def _pack_c(C: dict, names) -> np.ndarray:
    return np.concatenate([np.asarray(C[k]) for k in names], axis=-1)


def psi_monte_carlo_truth(net: Network, spec: SemSpec, summaries: SummarySpec,
                          iv: Intervention, R: int = 100000, seed: int = 0):
    """Simulate the intervened structural model R times with fresh randomness
    and average the mean outcome. Returns (psi, mc_standard_error)."""
    if R < 2:
        raise InvalidParameterError("R must be at least 2")
    if isinstance(iv, CentralityTarget):
        raise NotIdentifiedError("interventions on centrality cannot be identified")
    rng = child_rng(seed, TRUTH)
    names = list(spec.covariate_law)
    means = []
    if _stochastic_rewire(iv):
        for _ in range(R):
            C = draw_covariates(spec, net.n, rng)
            net_eff = resolve_network(net, C, iv, rng)
            means.append(_batched_mean_outcomes(net_eff, net, C, iv, spec, summaries, rng, 1))
    elif _c_dependent_network(iv):
        # the effective network varies with C; group replicates by drawn
        # covariate configuration and batch within groups
        done = 0
        while done < R:
            B = min(BLOCK, R - done)
            C_all = {k: (rng.random((B, net.n)) < p).astype(np.int64)
                     for k, p in spec.covariate_law.items()}
            packed = _pack_c(C_all, names)
            uniq, inverse = np.unique(packed, axis=0, return_inverse=True)
            for u in range(uniq.shape[0]):
                idx = np.flatnonzero(inverse == u)
                C = {k: C_all[k][idx[0]] for k in names}
                net_eff = resolve_network(net, C, iv, rng)
                means.append(_batched_mean_outcomes(net_eff, net, C, iv, spec,
                                                    summaries, rng, len(idx)))
            done += B
    else:
        net_eff = resolve_network(net, {}, iv, rng)
        done = 0
        while done < R:
            B = min(BLOCK, R - done)
            C = {k: (rng.random((B, net.n)) < p).astype(np.int64)
                 for k, p in spec.covariate_law.items()}
            means.append(_batched_mean_outcomes(net_eff, net, C, iv, spec, summaries, rng, B))
            done += B
    m = np.concatenate(means)
    return float(m.mean()), float(m.std(ddof=1) / np.sqrt(R))


def psi_conditional_truth(net: Network, spec: SemSpec, summaries: SummarySpec,
                          iv: Intervention, C: dict, R: int = 100000, seed: int = 0):
    """Truth with the covariates held at the supplied values; only treatment,
    latent, and outcome randomness vary. Returns (psi, mc_standard_error)."""
    return _fixed_c_truth(net, spec, summaries, iv, C, R, seed, probabilities=False)


def conditional_mean_given_c(net: Network, spec: SemSpec, summaries: SummarySpec,
                             iv: Intervention, C: dict, draws: int = 500, seed: int = 0):
    """E[mean outcome | C] under the intervention, averaging the true outcome
    probabilities over treatment (and latent) draws rather than sampled
    outcomes. Lower Monte Carlo noise than psi_conditional_truth at the same
    draw count. Returns (psi, mc_standard_error)."""
    return _fixed_c_truth(net, spec, summaries, iv, C, draws, seed, probabilities=True)


def _fixed_c_truth(net, spec, summaries, iv, C, R, seed, probabilities):
    if R < 2:
        raise InvalidParameterError("need at least 2 replicates")
    if isinstance(iv, CentralityTarget):
        raise NotIdentifiedError("interventions on centrality cannot be identified")
    rng = child_rng(seed, TRUTH)
    means = []
    if _stochastic_rewire(iv):
        for _ in range(R):
            net_eff = resolve_network(net, C, iv, rng)
            means.append(_batched_mean_outcomes(net_eff, net, C, iv, spec, summaries,
                                                rng, 1, probabilities))
    else:
        net_eff = resolve_network(net, C, iv, rng)
        done = 0
        while done < R:
            B = min(BLOCK, R - done)
            means.append(_batched_mean_outcomes(net_eff, net, C, iv, spec, summaries,
                                                rng, B, probabilities))
            done += B
    m = np.concatenate(means)
    return float(m.mean()), float(m.std(ddof=1) / np.sqrt(R))


# ---------------------------------------------------------------------------
# truth-table fixtures


def write_truth_table(path, table: dict) -> None:
    """Atomically write {key: {"psi": float, "mc_se": float, ...}} as JSON."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(table, fh, indent=2, sort_keys=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_truth_table(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def truth_key(n: int, network: str, preset: str, intervention: str) -> str:
    return f"n={n}|net={network}|preset={preset}|iv={intervention}"
