"""Targeted maximum likelihood estimation of the expected average
counterfactual outcome on a network.

Pipeline: fit the outcome and treatment models, build the pooled densities of
observed and counterfactual summaries, form the ratio weights, solve the
one-dimensional fluctuation, and average the updated counterfactual
predictions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateWeightsError, FluctuationError, PositivityError
from .interventions import (Intervention, PositivityReport, VStarSample,
                            counterfactual_summaries, positivity_diagnostic)
from .nuisance import (CleverWeights, LogisticFit, PooledDensity, clever_weights,
                       estimate_hbar, estimate_hbar_model, estimate_hbar_star, fit_logistic)
from .sem import Dataset, expit, logit

PRED_CLIP = 1e-6  # predictions clipped to [PRED_CLIP, 1-PRED_CLIP] before logit
SCORE_TOL = 1e-10


@dataclass
class TmleConfig:
    m_terms: tuple | None = None        # subset of the dataset's outcome-side terms; None = all
    g_terms: tuple | None = None        # subset of the treatment-side terms; None = all
    draws: int = 1000                   # Monte Carlo draws for stochastic interventions
    estimand: str = "marginal"          # "marginal" or "conditional"
    hbar_method: str = "pooled-empirical"  # or "model" (treatment-model-implied density)
    hbar_model_draws: int = 500
    weight_cap: float | None = None
    positivity: str = "check"           # "check" (fail on violation), "warn", "skip"


@dataclass
class NuisanceSnapshot:
    m_fit: LogisticFit
    g_fit: LogisticFit
    hbar: PooledDensity
    hbar_star: PooledDensity
    weights: CleverWeights
    v_star: VStarSample
    m_terms: tuple
    g_terms: tuple


@dataclass
class TmleResult:
    psi_hat: float
    epsilon_hat: float
    y_tilde_star: np.ndarray        # per-node updated counterfactual predictions
    per_unit_ic: np.ndarray         # influence contributions for the chosen estimand
    estimand_kind: str
    score_abs: float                # |sum H_i (Y_i - updated fit)| after targeting
    fits: NuisanceSnapshot
    positivity: PositivityReport | None
    variances: dict = field(default_factory=dict)   # filled by the variance module
    intervention: str = ""
    seed: int = 0


def _term_indices(all_terms: tuple, wanted: tuple | None) -> list:
    if wanted is None:
        return list(range(len(all_terms)))
    missing = [t for t in wanted if t not in all_terms]
    if missing:
        raise ValueError(f"model terms {missing} not among summary terms {all_terms}")
    return [all_terms.index(t) for t in wanted]


def clip_probs(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PRED_CLIP, 1.0 - PRED_CLIP)


def tmle_fluctuation(Y: np.ndarray, m_hat_v: np.ndarray, H: np.ndarray) -> float:
    """Solve sum H_i (Y_i - expit(logit m_hat_i + eps)) = 0 for eps."""
    H = np.asarray(H, dtype=np.float64)
    if np.all(H == 0):
        raise DegenerateWeightsError("all clever weights are zero")
    off = logit(clip_probs(np.asarray(m_hat_v, dtype=np.float64)))
    Y = np.asarray(Y, dtype=np.float64)

    def score(eps):
        return float(np.sum(H * (Y - expit(off + eps))))

    lo, hi = -10.0, 10.0
    while score(lo) * score(hi) > 0 and hi < 50.0:
        lo *= 2.0
        hi *= 2.0
    s_lo, s_hi = score(lo), score(hi)
    if s_lo * s_hi > 0:
        raise FluctuationError("fluctuation score has no root; outcome model is degenerate")
    if s_lo == 0.0:
        eps = lo
    elif s_hi == 0.0:
        eps = hi
    else:
        eps = float(brentq(score, lo, hi, xtol=1e-12, maxiter=200))
    # Newton polish: the root-finder tolerance is on eps, but the acceptance
    # bar is on the score itself
    for _ in range(10):
        mu = expit(off + eps)
        s = float(np.sum(H * (Y - mu)))
        if abs(s) < SCORE_TOL:
            break
        d = float(np.sum(H * mu * (1.0 - mu)))
        if d <= 0.0:
            break
        eps += s / d
    return float(eps)


def tmle_estimate(data: Dataset, iv: Intervention, config: TmleConfig | None = None,
                  seed: int = 0) -> TmleResult:
    """Point estimate, fluctuation, and influence contributions under one
    intervention. Deterministic given seed."""
    config = config or TmleConfig()
    terms_v = data.summaries.v_terms
    terms_w = data.summaries.w_terms
    m_idx = _term_indices(terms_v, config.m_terms)
    g_idx = _term_indices(terms_w, config.g_terms)
    m_terms = tuple(terms_v[i] for i in m_idx)
    g_terms = tuple(terms_w[i] for i in g_idx)

    m_fit = fit_logistic(data.V[:, m_idx], data.Y, feature_names=m_terms)
    g_fit_full = fit_logistic(data.W[:, g_idx], data.X, feature_names=g_terms)
    # wrapper so stochastic interventions can evaluate g on full W rows
    g_for_iv = _SubsetPredictor(g_fit_full, g_idx)

    v_star = counterfactual_summaries(
        data.net, data.C, data.X, iv, data.summaries,
        g_hat=g_for_iv, draws=config.draws, seed=seed)

    pos = None
    if config.positivity != "skip":
        pos = positivity_diagnostic(data.V, v_star.V_star)
        if not pos.passed and config.positivity == "check":
            raise PositivityError(
                f"{len(pos.unsupported)} counterfactual summary values unobserved; "
                "rerun with positivity='warn' to override")

    if config.hbar_method == "model":
        empirical = estimate_hbar(data.V)
        hbar = estimate_hbar_model(data.net, data.C, data.summaries, g_for_iv,
                                   draws=config.hbar_model_draws, seed=seed,
                                   fallback=empirical)
    else:
        hbar = estimate_hbar(data.V)
    hbar_star = estimate_hbar_star(v_star.V_star)
    weights = clever_weights(hbar, hbar_star, data.V, cap=config.weight_cap)

    m_hat_v = clip_probs(m_fit.predict(data.V[:, m_idx]))
    eps = tmle_fluctuation(data.Y, m_hat_v, weights.H)
    y_tilde = expit(logit(m_hat_v) + eps)

    m_hat_star = clip_probs(m_fit.predict(v_star.V_star[:, :, m_idx]))  # (draws, n)
    y_tilde_star = expit(logit(m_hat_star) + eps).mean(axis=0)
    psi_hat = float(y_tilde_star.mean())
    score_abs = float(abs(np.sum(weights.H * (data.Y - y_tilde))))

    fits = NuisanceSnapshot(m_fit=m_fit, g_fit=g_fit_full, hbar=hbar, hbar_star=hbar_star,
                            weights=weights, v_star=v_star, m_terms=m_terms, g_terms=g_terms)
    ic = influence_contributions(data.Y, y_tilde, y_tilde_star, weights.H, psi_hat,
                                 kind=config.estimand)
    return TmleResult(
        psi_hat=psi_hat,
        epsilon_hat=eps,
        y_tilde_star=y_tilde_star,
        per_unit_ic=ic,
        estimand_kind=config.estimand,
        score_abs=score_abs,
        fits=fits,
        positivity=pos,
        intervention=iv.describe(),
        seed=seed,
    )


class _SubsetPredictor:
    """Evaluate a fitted treatment model on full W rows by selecting the
    columns it was trained on."""

    def __init__(self, fit: LogisticFit, idx):
        self.fit = fit
        self.idx = list(idx)

    def predict(self, W: np.ndarray) -> np.ndarray:
        return self.fit.predict(np.asarray(W)[..., self.idx])


def influence_contributions(Y, y_tilde, y_tilde_star, H, psi, kind: str = "marginal") -> np.ndarray:
    """Per-unit influence contributions.

    marginal:   f_i = (Ytilde*_i - psi) + H_i (Y_i - Ytilde_i)
    conditional: f_i = H_i (Y_i - Ytilde_i)   (covariate terms cancel)
    """
    resid = H * (np.asarray(Y, dtype=np.float64) - y_tilde)
    if kind == "conditional":
        return resid
    if kind == "marginal":
        return (y_tilde_star - psi) + resid
    raise ValueError(f"unknown estimand kind {kind!r}")


def eif_evaluate(data: Dataset, result: TmleResult, kind: str | None = None) -> np.ndarray:
    """Re-derive per-unit influence contributions from a finished estimate."""
    kind = kind or result.estimand_kind
    m_idx = _term_indices(data.summaries.v_terms, result.fits.m_terms)
    m_hat_v = clip_probs(result.fits.m_fit.predict(data.V[:, m_idx]))
    y_tilde = expit(logit(m_hat_v) + result.epsilon_hat)
    return influence_contributions(data.Y, y_tilde, result.y_tilde_star,
                                   result.fits.weights.H, result.psi_hat, kind=kind)


def conditional_estimand(m_fit: LogisticFit, V_star: np.ndarray, m_idx=None) -> float:
    """Plug-in mean of the fitted outcome model over counterfactual summary
    draws (no targeting update)."""
    V = np.asarray(V_star)
    if m_idx is not None:
        V = V[..., list(m_idx)]
    return float(m_fit.predict(V).mean())
