"""Named simulation presets.

The "gym" scenario: each node has a baseline activity indicator PA, treatment
X is an encouragement whose uptake depends on own and neighborhood activity,
and the outcome Y (gym membership) depends on own treatment and activity plus
neighborhood totals, including the interaction between treated friends and
active friends. Coefficient values are choices of this repository, documented
here; all ground truths for them are computed by the oracle module.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .graph import Network, gen_preferential_attachment, gen_small_world
from .interventions import (AddActiveFriend, BernoulliP, Compose, Intervention,
                            TopDegree)
from .sem import LatentConfig, LogisticLaw, SemSpec, SummarySpec

W_TERMS = ("PA", "sum(PA)")
V_TERMS = ("X", "PA", "sum(X)", "sum(PA)", "sum(X)*sum(PA)", "degree")

# outcome-model terms omitted under deliberate misspecification: all the
# neighborhood summaries
MISSPECIFIED_M_TERMS = ("X", "PA")
MISSPECIFIED_G_TERMS = ()   # intercept-only treatment model


@dataclass(frozen=True)
class Preset:
    name: str
    spec: SemSpec
    summaries: SummarySpec

    def interventions(self) -> dict:
        return standard_interventions()


def standard_interventions() -> dict:
    """The four study interventions: constant-probability encouragement,
    targeting the most-connected tenth, adding an active friend, and the
    composition of the last two."""
    return {
        "g1": BernoulliP(0.35),
        "g2": TopDegree(0.10),
        "g3": AddActiveFriend(10),
        "g4": Compose((TopDegree(0.10), AddActiveFriend(10))),
    }


def _gym_outcome() -> LogisticLaw:
    # The negative degree coefficient offsets the expected value of the
    # neighborhood totals, so the outcome probability does not trend with a
    # node's degree even on heavy-tailed graphs; only fluctuations of the
    # neighborhood around its expectation move the outcome.
    return LogisticLaw(
        intercept=-1.3,
        coefs={
            "X": 0.9,
            "PA": 0.8,
            "sum(X)": 0.35,
            "sum(PA)": 1.1,
            "sum(X)*sum(PA)": -0.01,
            "degree": -0.55,
        },
    )


def _gym_treatment() -> LogisticLaw:
    # uptake rises with own activity; mean uptake ~ 0.3. Depending only on the
    # node's own covariate keeps outcome dependence within two ties, matching
    # the dependency neighborhoods the variance estimator sums over.
    return LogisticLaw(intercept=-1.3, coefs={"PA": 0.9})


def get_preset(name: str) -> Preset:
    """Presets:

    gym          transmission dependence only (covariates, treatment, outcome)
    gym-latent   gym plus an unobserved nodal trait shared across ties
    """
    summaries = SummarySpec(w_terms=W_TERMS, v_terms=V_TERMS)
    if name == "gym":
        spec = SemSpec(
            covariate_law={"PA": 0.4},
            treatment_law=_gym_treatment(),
            outcome_law=_gym_outcome(),
        )
    elif name == "gym-latent":
        spec = SemSpec(
            covariate_law={"PA": 0.4},
            treatment_law=_gym_treatment(),
            outcome_law=_gym_outcome(),
            latent=LatentConfig(loading_own=0.8, loading_friends=0.4),
        )
    else:
        raise ConfigError(f"unknown preset {name!r}; available: gym, gym-latent")
    return Preset(name=name, spec=spec, summaries=summaries)


def make_network(family: str, n: int, seed: int, **kw) -> Network:
    """Network factories used by configs: 'smallworld' (k_ring, p_rewire) and
    'prefattach' (m_attach, power)."""
    if family == "smallworld":
        return gen_small_world(n, k_ring=int(kw.get("k_ring", 8)),
                               p_rewire=float(kw.get("p_rewire", 0.1)), seed=seed)
    if family == "prefattach":
        return gen_preferential_attachment(n, m_attach=int(kw.get("m_attach", 3)),
                                           power=float(kw.get("power", 0.0)), seed=seed)
    raise ConfigError(f"unknown network family {family!r}")
