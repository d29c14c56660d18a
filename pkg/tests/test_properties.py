"""Property-based structural invariants over randomized instances."""

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from nettmle import (BernoulliP, Deterministic, Network, TmleConfig,
                     dependency_neighborhoods, gen_small_world,
                     psi_exact_enumeration, simulate, tmle_estimate, var_dependent,
                     var_iid)
from nettmle.sem import LogisticLaw, SemSpec, SummarySpec

SETTINGS = settings(max_examples=25, deadline=None,
                    suppress_health_check=[HealthCheck.too_slow])


@st.composite
def small_networks(draw, n_min=2, n_max=8):
    n = draw(st.integers(n_min, n_max))
    possible = [(i, j) for i in range(n) for j in range(i + 1, n)]
    mask = draw(st.lists(st.booleans(), min_size=len(possible),
                         max_size=len(possible)))
    return Network.from_edges(n, [e for e, m in zip(possible, mask) if m])


@st.composite
def small_instances(draw):
    net = draw(small_networks())
    spec = SemSpec(
        covariate_law={"PA": draw(st.floats(0.2, 0.8))},
        treatment_law=LogisticLaw(draw(st.floats(-1, 1)),
                                  {"PA": draw(st.floats(-1.5, 1.5))}),
        outcome_law=LogisticLaw(draw(st.floats(-1, 1)),
                                {"X": draw(st.floats(-1.5, 1.5)),
                                 "PA": draw(st.floats(-1.5, 1.5)),
                                 "sum(X)": draw(st.floats(-0.8, 0.8))}),
    )
    summaries = SummarySpec(w_terms=("PA",), v_terms=("X", "PA", "sum(X)"))
    return net, spec, summaries


@given(small_networks())
@SETTINGS
def test_dependency_symmetry_and_closure(net):
    dep = dependency_neighborhoods(net)
    pm = dep.pair_matrix
    # symmetric with full diagonal
    assert (pm != pm.T).nnz == 0
    assert np.all(pm.diagonal() == 1)
    # closure: D_i is exactly the distance<=2 ball around i
    a = net.adjacency.toarray()
    two = ((np.eye(net.n) + a + a @ a) > 0).astype(float)
    assert np.array_equal(pm.toarray() > 0, two > 0)


@given(small_networks(n_min=3), st.integers(0, 10 ** 6))
@SETTINGS
def test_var_dependent_equals_iid_on_edgeless(net, seed):
    rng = np.random.default_rng(seed)
    ic = rng.normal(size=net.n)
    edgeless = Network.from_edges(net.n, [])
    dep = dependency_neighborhoods(edgeless)
    assert var_dependent(ic, dep, 0.5).variance == pytest.approx(
        var_iid(ic, 0.5).variance)


@given(small_instances(), st.integers(0, 10 ** 6))
@SETTINGS
def test_enumeration_permutation_equivariance(inst, seed):
    net, spec, summaries = inst
    rng = np.random.default_rng(seed)
    perm = rng.permutation(net.n)
    relabeled = Network.from_edges(net.n, [(int(perm[i]), int(perm[j]))
                                           for i, j in net.edges])
    iv = BernoulliP(0.4)
    assert psi_exact_enumeration(net, spec, summaries, iv) == pytest.approx(
        psi_exact_enumeration(relabeled, spec, summaries, iv), abs=1e-10)


# the estimator-level properties need datasets large enough for the nuisance
# fits to exist, so they randomize over seeds on a fixed medium network

NET = gen_small_world(150, 4, 0.1, seed=0)
SPEC = SemSpec(covariate_law={"PA": 0.4},
               treatment_law=LogisticLaw(-0.4, {"PA": 0.8}),
               outcome_law=LogisticLaw(-0.5, {"X": 0.9, "PA": 0.6, "sum(X)": 0.3}))
SUMM = SummarySpec(w_terms=("PA",), v_terms=("X", "PA", "sum(X)"))


@given(st.integers(0, 10 ** 6), st.floats(0.25, 0.75))
@SETTINGS
def test_substitution_estimate_in_unit_interval(seed, p):
    data = simulate(NET, SPEC, SUMM, seed=seed)
    res = tmle_estimate(data, BernoulliP(p),
                        TmleConfig(draws=30, positivity="skip"), seed=seed)
    assert 0.0 <= res.psi_hat <= 1.0
    assert np.all((res.y_tilde_star >= 0) & (res.y_tilde_star <= 1))
    assert res.score_abs < 1e-8


@given(st.integers(0, 10 ** 6))
@SETTINGS
def test_identity_intervention_recovers_sample_mean(seed):
    data = simulate(NET, SPEC, SUMM, seed=seed)
    res = tmle_estimate(data, Deterministic(data.X),
                        TmleConfig(positivity="skip"), seed=seed)
    assert res.psi_hat == pytest.approx(data.Y.mean(), abs=1e-12)


@given(st.integers(0, 10 ** 6))
@SETTINGS
def test_seed_determinism_end_to_end(seed):
    data1 = simulate(NET, SPEC, SUMM, seed=seed)
    data2 = simulate(NET, SPEC, SUMM, seed=seed)
    assert np.array_equal(data1.Y, data2.Y)
    r1 = tmle_estimate(data1, BernoulliP(0.4),
                       TmleConfig(draws=25, positivity="skip"), seed=seed)
    r2 = tmle_estimate(data2, BernoulliP(0.4),
                       TmleConfig(draws=25, positivity="skip"), seed=seed)
    assert r1.psi_hat == r2.psi_hat
    assert np.array_equal(r1.per_unit_ic, r2.per_unit_ic)


@given(st.integers(0, 10 ** 6))
@SETTINGS
def test_estimate_permutation_equivariance(seed):
    # relabeling nodes relabels the data but leaves the estimate unchanged
    data = simulate(NET, SPEC, SUMM, seed=seed)
    rng = np.random.default_rng(seed + 1)
    perm = rng.permutation(NET.n)
    inv = np.argsort(perm)
    net_p = Network.from_edges(NET.n, [(int(perm[i]), int(perm[j]))
                                       for i, j in NET.edges])
    from nettmle.sem import Dataset, apply_summaries
    C_p = {k: v[inv] for k, v in data.C.items()}
    X_p, Y_p = data.X[inv], data.Y[inv]
    W_p, V_p = apply_summaries(net_p, SUMM, C_p, X_p)
    data_p = Dataset(net=net_p, summaries=SUMM, C=C_p, X=X_p, Y=Y_p, W=W_p, V=V_p)
    r = tmle_estimate(data, Deterministic(data.X),
                      TmleConfig(positivity="skip"), seed=0)
    r_p = tmle_estimate(data_p, Deterministic(X_p),
                        TmleConfig(positivity="skip"), seed=0)
    assert r.psi_hat == pytest.approx(r_p.psi_hat, abs=1e-10)
