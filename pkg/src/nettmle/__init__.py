"""Targeted estimation of average counterfactual outcomes on social networks:
structural simulation, interventions, TMLE with ratio weights, dependency-
aware variance estimators, ground-truth oracles, and a Monte Carlo harness."""

__version__ = "0.1.0"

from .errors import (BootstrapError, ConfigError, DegenerateWeightsError,
                     EmptySubnetworkError, FluctuationError, InvalidParameterError,
                     NettmleError, NotIdentifiedError, PositivityError,
                     SeparationError, SpecificationError, TooLargeError)
from .graph import (DependencyStructure, HubConditioning, Network, RateDiagnostic,
                    condition_on_hubs, dependency_neighborhoods,
                    gen_preferential_attachment, gen_small_world, read_edge_list,
                    stein_rate_diagnostic, write_edge_list)
from .interventions import (AddActiveFriend, BernoulliP, CentralityTarget, Compose,
                            Deterministic, Dynamic, Intervention, NetworkRewire,
                            Stochastic, TopDegree, counterfactual_summaries,
                            parse_intervention, positivity_diagnostic)
from .nuisance import (CleverWeights, LogisticFit, PooledDensity, clever_weights,
                       estimate_hbar, estimate_hbar_model, estimate_hbar_star,
                       fit_logistic)
from .oracle import (conditional_mean_given_c, psi_conditional_truth,
                     psi_exact_enumeration, psi_monte_carlo_truth, read_truth_table,
                     write_truth_table)
from .presets import Preset, get_preset, make_network, standard_interventions
from .sem import (Dataset, FixedFraction, LatentConfig, LogisticLaw, SemSpec,
                  SummarySpec, apply_summaries, simulate)
from .tmle import TmleConfig, TmleResult, eif_evaluate, tmle_estimate, tmle_fluctuation
from .variance import (ConfidenceInterval, OrthogonalDecomposition, VarianceReport,
                       confidence_interval, orthogonal_decomposition, var_bootstrap,
                       var_dependent, var_iid, variance_suite)
