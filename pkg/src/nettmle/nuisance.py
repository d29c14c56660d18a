"""Nuisance estimation: logistic regression (IRLS), pooled summary densities,
and the ratio weights used by the targeting step."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWeightsError, InvalidParameterError, PositivityError, SeparationError
from .sem import expit

GRAD_TOL = 1e-10
MAX_ITER = 100
COEF_BOUND = 30.0  # separation guard on the coefficient norm
RIDGE = 1e-8


@dataclass
class LogisticFit:
    """Weighted quasi-binomial logistic fit via IRLS."""

    feature_names: tuple
    coef: np.ndarray            # (p + 1,), intercept first
    n_iter: int
    grad_norm: float
    converged: bool
    dropped: tuple = ()

    def linear_predictor(self, features: np.ndarray) -> np.ndarray:
        design = _with_intercept(np.asarray(features, dtype=np.float64))
        return design @ self.coef

    def predict(self, features: np.ndarray) -> np.ndarray:
        return expit(self.linear_predictor(features))


def _with_intercept(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    shape = features.shape[:-1] + (features.shape[-1] + 1,)
    out = np.ones(shape, dtype=np.float64)
    out[..., 1:] = features
    return out


def fit_logistic(features: np.ndarray, outcome: np.ndarray, weights: np.ndarray | None = None,
                 offset: np.ndarray | None = None, feature_names=None) -> LogisticFit:
    """IRLS to gradient-norm 1e-10 or 100 iterations. Supports fractional
    outcomes in [0, 1] (quasi-binomial), observation weights, and an offset.
    Aliased columns are dropped with a warning; a singular information matrix
    gets a 1e-8 ridge; diverging coefficients raise SeparationError."""
    y = np.asarray(outcome, dtype=np.float64)
    if np.any(y < 0) or np.any(y > 1) or not np.all(np.isfinite(y)):
        raise InvalidParameterError("outcomes must lie in [0, 1]")
    design = _with_intercept(features)
    if not np.all(np.isfinite(design)):
        raise InvalidParameterError("non-finite feature values")
    n, p = design.shape
    if feature_names is None:
        feature_names = tuple(f"x{j}" for j in range(p - 1))
    names = ("(intercept)",) + tuple(feature_names)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise InvalidParameterError("negative weights")
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=np.float64)

    # drop aliased columns by pivoted rank detection on the weighted design
    keep = _independent_columns(design * np.sqrt(w)[:, None])
    dropped = tuple(names[j] for j in range(p) if j not in keep)
    if dropped:
        warnings.warn(f"dropping aliased columns: {dropped}", stacklevel=2)
    dsub = design[:, keep]

    # standardize non-intercept columns for conditioning; coefficients are
    # mapped back to the raw scale afterwards
    centers = dsub.mean(axis=0)
    scales = dsub.std(axis=0)
    centers[0], scales[0] = 0.0, 1.0
    scales[scales == 0] = 1.0
    z = (dsub - centers) / scales

    beta = np.zeros(len(keep))
    grad_norm = np.inf
    for it in range(1, MAX_ITER + 1):
        eta = z @ beta + off
        mu = expit(eta)
        grad = z.T @ (w * (y - mu))
        grad_norm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if grad_norm < GRAD_TOL:
            break
        info = z.T @ (z * (w * mu * (1.0 - mu))[:, None])
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(info + RIDGE * np.eye(len(keep)), grad)
        # halve overshooting steps so Newton cannot diverge on steep fits
        for _ in range(30):
            cand = beta + step
            g_new = z.T @ (w * (y - expit(z @ cand + off)))
            if np.max(np.abs(g_new)) < grad_norm or np.max(np.abs(step)) < 1e-14:
                break
            step = step / 2.0
        beta = cand
        if np.linalg.norm(beta) > COEF_BOUND:
            raise SeparationError(
                f"coefficient norm exceeded {COEF_BOUND}; data are separated or degenerate")
    raw = beta / scales
    raw[0] = beta[0] - float(np.sum(beta[1:] * centers[1:] / scales[1:]))
    coef = np.zeros(p)
    coef[list(keep)] = raw
    return LogisticFit(
        feature_names=tuple(feature_names),
        coef=coef,
        n_iter=it,
        grad_norm=grad_norm,
        converged=grad_norm < GRAD_TOL,
        dropped=dropped,
    )


def _independent_columns(mat: np.ndarray) -> list:
    """Indices of a maximal linearly independent column subset (greedy QR)."""
    keep: list = []
    for j in range(mat.shape[1]):
        cand = mat[:, keep + [j]]
        if np.linalg.matrix_rank(cand, tol=1e-10) == len(keep) + 1:
            keep.append(j)
    return keep


# ---------------------------------------------------------------------------
# pooled summary densities


def _rounded(arr: np.ndarray) -> np.ndarray:
    """Rows rounded for stable keying; -0.0 normalized so byte-level
    comparison matches numeric equality."""
    a = np.asarray(arr, dtype=np.float64).round(9)
    if a.ndim == 1:
        a = a[:, None]
    a = np.ascontiguousarray(a)
    a[a == 0] = 0.0
    return a


def _void_view(a: np.ndarray) -> np.ndarray:
    """One opaque element per row; sorting/comparison is a memcmp, much
    faster than field-wise structured comparison on large tables."""
    return a.view(np.dtype((np.void, a.dtype.itemsize * a.shape[1]))).ravel()


def _unique_rows_with_counts(arr: np.ndarray):
    a = _rounded(arr)
    uniq, counts = np.unique(_void_view(a), return_counts=True)
    rows = uniq.view(a.dtype).reshape(-1, a.shape[1])
    return rows, counts


@dataclass
class PooledDensity:
    """Probability masses over a finite set of summary-value tuples."""

    mass: dict = field(default_factory=dict)

    def __post_init__(self):
        total = sum(self.mass.values())
        if self.mass and abs(total - 1.0) > 1e-12:
            raise InvalidParameterError(f"masses sum to {total}, not 1")
        if any(v < 0 for v in self.mass.values()):
            raise InvalidParameterError("negative mass")
        self._keys = None
        self._probs = None

    def _index(self):
        # sorted byte view of the support, for vectorized lookups
        if self._keys is None:
            rows = _rounded(np.array([list(k) for k in self.mass]))
            probs = np.array([self.mass[k] for k in self.mass], dtype=np.float64)
            view = _void_view(rows)
            order = np.argsort(view)
            self._keys = view[order]
            self._probs = probs[order]
        return self._keys, self._probs

    def lookup(self, V: np.ndarray) -> np.ndarray:
        if not self.mass:
            return np.zeros(np.asarray(V).shape[0])
        keys, probs = self._index()
        q = _void_view(_rounded(V))
        idx = np.searchsorted(keys, q)
        out = np.zeros(q.shape[0])
        ok = idx < keys.shape[0]
        hit = np.zeros(q.shape[0], dtype=bool)
        hit[ok] = keys[idx[ok]] == q[ok]
        out[hit] = probs[idx[hit]]
        return out

    @property
    def support_size(self) -> int:
        return len(self.mass)


def estimate_hbar(V: np.ndarray, method: str = "pooled-empirical") -> PooledDensity:
    """Pooled density of observed summaries: relative frequencies over the n
    observed rows."""
    if method != "pooled-empirical":
        raise InvalidParameterError(f"unknown method {method!r}; model-based densities "
                                    "are built with estimate_hbar_model")
    V = np.asarray(V)
    if V.size == 0:
        raise InvalidParameterError("empty summary table")
    rows, counts = _unique_rows_with_counts(V)
    mass = {tuple(r): c for r, c in zip(rows, counts / counts.sum())}
    return _normalized(mass)


def estimate_hbar_star(V_star: np.ndarray) -> PooledDensity:
    """Pooled density of counterfactual summaries over nodes and draws."""
    V_star = np.asarray(V_star)
    flat = V_star.reshape(-1, V_star.shape[-1])
    return estimate_hbar(flat)


def estimate_hbar_model(net, C, summaries, g_fit, draws: int, seed: int,
                        fallback: PooledDensity | None = None) -> PooledDensity:
    """Model-implied pooled density of V: draw X from the fitted treatment
    model at the observed W, recompute V, and pool over nodes and draws.
    Inherits any misspecification of the treatment model.

    When `fallback` is given, observed values with zero model mass borrow the
    fallback mass (then renormalize) so downstream ratio weights stay finite.
    """
    from .sem import eval_terms
    from .seeds import HBAR_MODEL, child_rng

    rng = child_rng(seed, HBAR_MODEL)
    W = eval_terms(summaries.w_terms, net, C)[0]
    p = g_fit.predict(W)
    X_draws = (rng.random((draws, net.n)) < p[None, :]).astype(np.int64)
    V = eval_terms(summaries.v_terms, net, C, X_draws.astype(np.float64))
    dens = estimate_hbar(V.reshape(-1, V.shape[-1]))
    if fallback is not None:
        mass = dict(dens.mass)
        floor = 0.5 / (draws * net.n)
        for k, fm in fallback.mass.items():
            if mass.get(k, 0.0) == 0.0 and fm > 0:
                mass[k] = floor
        dens = _normalized(mass)
    return dens


def _normalized(mass: dict) -> PooledDensity:
    total = sum(mass.values())
    return PooledDensity(mass={k: v / total for k, v in mass.items()})


# ---------------------------------------------------------------------------
# clever weights


@dataclass
class CleverWeights:
    H: np.ndarray
    n_truncated: int
    cap: float | None

    def __post_init__(self):
        if np.all(self.H == 0):
            raise DegenerateWeightsError("all clever weights are zero")


def clever_weights(hbar: PooledDensity, hbar_star: PooledDensity, V_obs: np.ndarray,
                   cap: float | None = None) -> CleverWeights:
    """H_i = hbar_star(V_i) / hbar(V_i), optionally truncated at cap."""
    denom = hbar.lookup(V_obs)
    numer = hbar_star.lookup(V_obs)
    zero = np.flatnonzero(denom == 0.0)
    if zero.size:
        raise PositivityError(f"hbar is zero at observed V for nodes {zero[:10].tolist()}")
    H = numer / denom
    n_trunc = 0
    if cap is not None:
        n_trunc = int(np.sum(H > cap))
        H = np.minimum(H, cap)
    n = len(H)
    if cap is None and H.size and H.max() > np.sqrt(n):
        warnings.warn(f"max clever weight {H.max():.2f} exceeds sqrt(n)={np.sqrt(n):.2f}",
                      stacklevel=2)
    return CleverWeights(H=H, n_truncated=n_trunc, cap=cap)
