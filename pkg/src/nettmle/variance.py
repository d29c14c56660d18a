"""Variance estimation for the targeted network estimator: iid influence-curve
variance, the dependent-pair variance that sums over dependency neighborhoods,
a parametric bootstrap, and an orthogonal decomposition of the influence
contributions with component-wise variances."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import (BootstrapError, DegenerateWeightsError, FluctuationError,
                     InvalidParameterError, PositivityError, SeparationError)
from .graph import DependencyStructure, dependency_neighborhoods
from .interventions import Intervention, counterfactual_summaries
from .seeds import BOOTSTRAP, DECOMPOSITION, child_rng
from .sem import Dataset, eval_terms, expit, logit
from .tmle import NuisanceSnapshot, clip_probs, tmle_fluctuation


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    clipped: bool  # True when an endpoint was clipped to [0, 1]

    def __iter__(self):
        return iter((self.lower, self.upper))

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass
class VarianceReport:
    method: str                     # "iid" | "dependent-ic" | "bootstrap"
    variance: float
    ci95: ConfidenceInterval
    n_pairs_summed: int | None = None
    M: int | None = None
    n_failures: int = 0
    floored: bool = False           # dependent-ic raw sum was negative

    def __post_init__(self):
        if self.variance < 0:
            raise InvalidParameterError("variance must be nonnegative")


def confidence_interval(psi_hat: float, report_or_var, level: float = 0.95) -> ConfidenceInterval:
    """Wald interval psi_hat +/- z * sqrt(variance), clipped to [0, 1]."""
    var = report_or_var.variance if isinstance(report_or_var, VarianceReport) else float(report_or_var)
    if var < 0:
        raise InvalidParameterError("variance must be nonnegative")
    if not 0 < level < 1:
        raise InvalidParameterError("level must be in (0, 1)")
    z = float(norm.ppf(0.5 + level / 2.0))
    half = z * np.sqrt(var)
    lo, hi = psi_hat - half, psi_hat + half
    clipped = bool(lo < 0.0 or hi > 1.0)
    return ConfidenceInterval(lower=float(max(lo, 0.0)), upper=float(min(hi, 1.0)),
                              level=level, clipped=clipped)


def var_iid(ic: np.ndarray, psi_hat: float) -> VarianceReport:
    """(1/n^2) * sum f_i^2, treating contributions as independent."""
    ic = np.asarray(ic, dtype=np.float64)
    n = ic.shape[0]
    var = float(np.sum(ic ** 2) / n ** 2)
    return VarianceReport(method="iid", variance=var,
                          ci95=confidence_interval(psi_hat, var))


def var_dependent(ic: np.ndarray, dep: DependencyStructure, psi_hat: float) -> VarianceReport:
    """(1/n^2) * sum over pairs (i, j) with j in D_i of f_i f_j. Negative raw
    sums (possible in small samples) are floored at zero with a warning."""
    ic = np.asarray(ic, dtype=np.float64)
    n = ic.shape[0]
    if dep.n != n:
        raise InvalidParameterError("dependency structure size mismatch")
    raw = float(ic @ (dep.pair_matrix @ ic) / n ** 2)
    floored = raw < 0.0
    if floored:
        warnings.warn(f"dependent-pair variance sum {raw:.3e} negative; floored at 0",
                      stacklevel=2)
    var = max(raw, 0.0)
    return VarianceReport(method="dependent-ic", variance=var,
                          ci95=confidence_interval(psi_hat, var),
                          n_pairs_summed=dep.n_pairs, floored=floored)


# ---------------------------------------------------------------------------
# parametric bootstrap


def var_bootstrap(data: Dataset, fits: NuisanceSnapshot, iv: Intervention, psi_hat: float,
                  M: int = 1000, seed: int = 0, draws: int = 50,
                  max_failure_fraction: float = 0.05) -> VarianceReport:
    """Parametric bootstrap of the point estimate.

    Each replicate resamples node covariates with replacement, draws treatment
    from the fitted treatment model and outcomes from the fitted outcome
    model, recomputes summaries on the fixed network, and refits only the
    fluctuation parameter; the two pooled densities are reused as fitted.
    Replicates whose resampled summaries fall outside the fitted density
    support (or otherwise fail) are counted; more than `max_failure_fraction`
    failures aborts.
    """
    if M < 2:
        raise InvalidParameterError("need at least 2 bootstrap replicates")
    net = data.net
    n = net.n
    cov_names = sorted(data.C)
    C_mat = np.column_stack([np.asarray(data.C[k]) for k in cov_names]) if cov_names \
        else np.zeros((n, 0))
    m_idx = [data.summaries.v_terms.index(t) for t in fits.m_terms]

    psis = np.empty(M)
    psis.fill(np.nan)
    failures = 0
    for b in range(M):
        rng = child_rng(seed, BOOTSTRAP, b)
        try:
            rows = rng.integers(n, size=n)
            C_b = {k: C_mat[rows, j].astype(np.int64) for j, k in enumerate(cov_names)}
            W_b = eval_terms(data.summaries.w_terms, net, C_b)[0]
            p_x = fits.g_fit.predict(W_b[:, [data.summaries.w_terms.index(t)
                                             for t in fits.g_terms]])
            X_b = (rng.random(n) < p_x).astype(np.int64)
            V_b = eval_terms(data.summaries.v_terms, net, C_b,
                             X_b.astype(np.float64)[None, :])[0]
            m_b = clip_probs(fits.m_fit.predict(V_b[:, m_idx]))
            Y_b = (rng.random(n) < m_b).astype(np.int64)

            denom = fits.hbar.lookup(V_b)
            numer = fits.hbar_star.lookup(V_b)
            # resampled summary values unseen by the fitted densities get the
            # neutral weight 1; the fitted density carries no information there
            unseen = denom == 0.0
            H_b = np.where(unseen, 1.0, numer / np.where(unseen, 1.0, denom))
            if unseen.mean() > 0.5:
                raise PositivityError("most resampled summaries outside fitted support")

            eps_b = tmle_fluctuation(Y_b, m_b, H_b)
            v_star_b = counterfactual_summaries(
                net, C_b, X_b, iv, data.summaries,
                g_hat=_GColumnPredictor(fits, data.summaries),
                draws=draws, seed=int(rng.integers(2 ** 31)))
            m_star_b = clip_probs(fits.m_fit.predict(v_star_b.V_star[:, :, m_idx]))
            psis[b] = float(expit(logit(m_star_b) + eps_b).mean())
        except (PositivityError, DegenerateWeightsError, FluctuationError,
                SeparationError):
            failures += 1
    if failures > max_failure_fraction * M:
        raise BootstrapError(f"{failures}/{M} bootstrap replicates failed")
    ok = psis[~np.isnan(psis)]
    var = float(np.var(ok, ddof=1))
    return VarianceReport(method="bootstrap", variance=var,
                          ci95=confidence_interval(psi_hat, var),
                          M=M, n_failures=failures)


class _GColumnPredictor:
    """Evaluate the fitted treatment model on full W rows."""

    def __init__(self, fits: NuisanceSnapshot, summaries):
        self.fit = fits.g_fit
        self.idx = [summaries.w_terms.index(t) for t in fits.g_terms]

    def predict(self, W: np.ndarray) -> np.ndarray:
        return self.fit.predict(np.asarray(W)[..., self.idx])


# ---------------------------------------------------------------------------
# orthogonal decomposition


@dataclass
class OrthogonalDecomposition:
    f_Y: np.ndarray
    f_X: np.ndarray
    f_C: np.ndarray
    var_Y: float
    var_X: float
    var_C: float
    grand_mean: float   # mean of estimated E[f_i | C]; add back to reconstruct
    draws: int

    @property
    def total_variance(self) -> float:
        return self.var_Y + self.var_X + self.var_C

    def reconstruct(self) -> np.ndarray:
        return self.f_Y + self.f_X + self.f_C + self.grand_mean


def orthogonal_decomposition(data: Dataset, fits: NuisanceSnapshot, ic: np.ndarray,
                             epsilon: float, psi_hat: float, draws: int = 500,
                             seed: int = 0,
                             dep: DependencyStructure | None = None) -> OrthogonalDecomposition:
    """Split influence contributions into outcome, treatment, and covariate
    components by Monte Carlo conditional expectations under the fitted laws.

    f_Y = f - E[f | X, C]; f_X = E[f | X, C] - E[f | C]; f_C = E[f | C]
    centered at its mean, so f_Y + f_X + f_C + grand_mean telescopes back to
    f exactly. Component variances sum over dependency-neighborhood pairs,
    scaled by 1/n^2.
    """
    ic = np.asarray(ic, dtype=np.float64)
    net = data.net
    n = net.n
    dep = dep or dependency_neighborhoods(net)
    rng = child_rng(seed, DECOMPOSITION)
    m_idx = [data.summaries.v_terms.index(t) for t in fits.m_terms]
    g_pred = _GColumnPredictor(fits, data.summaries)

    m_v = clip_probs(fits.m_fit.predict(data.V[:, m_idx]))
    y_tilde = expit(logit(m_v) + epsilon)
    H = fits.weights.H
    base = ic - H * (data.Y - y_tilde)   # the part of f not involving Y

    # E[f | X, C]: only Y is random; resimulate it from the updated fit
    Y_draws = (rng.random((draws, n)) < y_tilde[None, :]).astype(np.float64)
    e_xc = base + H * (Y_draws.mean(axis=0) - y_tilde)

    # E[f | C]: redraw X from the fitted treatment model, recompute V-dependent
    # pieces, resimulate Y
    W = data.W
    p_x = g_pred.predict(W)
    acc = np.zeros(n)
    for r in range(draws):
        X_r = (rng.random(n) < p_x).astype(np.float64)
        V_r = eval_terms(data.summaries.v_terms, net, data.C, X_r[None, :])[0]
        denom = fits.hbar.lookup(V_r)
        numer = fits.hbar_star.lookup(V_r)
        H_r = np.divide(numer, denom, out=np.zeros(n), where=denom > 0)
        m_r = clip_probs(fits.m_fit.predict(V_r[:, m_idx]))
        yt_r = expit(logit(m_r) + epsilon)
        Y_r = (rng.random(n) < yt_r).astype(np.float64)
        acc += base + H_r * (Y_r - yt_r)
    e_c = acc / draws

    grand = float(e_c.mean())
    f_Y = ic - e_xc
    f_X = e_xc - e_c
    f_C = e_c - grand

    def comp_var(f):
        return float(f @ (dep.pair_matrix @ f) / n ** 2)

    return OrthogonalDecomposition(
        f_Y=f_Y, f_X=f_X, f_C=f_C,
        var_Y=comp_var(f_Y), var_X=comp_var(f_X), var_C=comp_var(f_C),
        grand_mean=grand, draws=draws,
    )


def variance_suite(result, data: Dataset, iv: Intervention, methods=("iid", "dependent"),
                   dep: DependencyStructure | None = None, M: int = 1000,
                   bootstrap_draws: int = 50, seed: int = 0) -> dict:
    """Compute the requested variance reports for a finished estimate and
    attach them to result.variances."""
    out = {}
    for method in methods:
        if method == "iid":
            out["iid"] = var_iid(result.per_unit_ic, result.psi_hat)
        elif method in ("dependent", "dependent-ic"):
            d = dep or dependency_neighborhoods(data.net)
            out["dependent-ic"] = var_dependent(result.per_unit_ic, d, result.psi_hat)
        elif method == "bootstrap":
            out["bootstrap"] = var_bootstrap(data, result.fits, iv, result.psi_hat,
                                             M=M, seed=seed, draws=bootstrap_draws)
        else:
            raise InvalidParameterError(f"unknown variance method {method!r}")
    result.variances.update(out)
    return out
