import numpy as np
import pytest

from nettmle import (BernoulliP, BootstrapError, ConfidenceInterval,
                     InvalidParameterError, Network, TmleConfig,
                     confidence_interval, dependency_neighborhoods, get_preset,
                     gen_small_world, orthogonal_decomposition, simulate,
                     tmle_estimate, var_bootstrap, var_dependent, var_iid,
                     variance_suite)


@pytest.fixture(scope="module")
def estimate_400():
    preset = get_preset("gym")
    net = gen_small_world(400, 8, 0.1, seed=2)
    data = simulate(net, preset.spec, preset.summaries, seed=11)
    result = tmle_estimate(data, BernoulliP(0.35),
                           TmleConfig(draws=100, positivity="skip"), seed=3)
    return data, result


def test_confidence_interval_wald():
    ci = confidence_interval(0.5, 0.0025)
    assert ci.lower == pytest.approx(0.5 - 1.959964 * 0.05, abs=1e-5)
    assert ci.upper == pytest.approx(0.5 + 1.959964 * 0.05, abs=1e-5)
    assert not ci.clipped
    assert ci.contains(0.5) and not ci.contains(0.9)
    lo, hi = ci
    assert (lo, hi) == (ci.lower, ci.upper)


def test_confidence_interval_clipping_and_validation():
    ci = confidence_interval(0.01, 0.01)
    assert ci.lower == 0.0 and ci.clipped
    with pytest.raises(InvalidParameterError):
        confidence_interval(0.5, -1.0)
    with pytest.raises(InvalidParameterError):
        confidence_interval(0.5, 0.01, level=1.5)


def test_var_iid_formula():
    ic = np.array([1.0, -1.0, 2.0, 0.0])
    rep = var_iid(ic, 0.5)
    assert rep.variance == pytest.approx(6.0 / 16.0)
    assert rep.method == "iid"


def test_var_dependent_equals_iid_on_edgeless():
    ic = np.random.default_rng(0).normal(size=50)
    net = Network.from_edges(50, [])
    dep = dependency_neighborhoods(net)
    assert var_dependent(ic, dep, 0.5).variance == pytest.approx(
        var_iid(ic, 0.5).variance)


def test_var_dependent_adds_cross_terms(path3):
    dep = dependency_neighborhoods(path3)       # complete closure on a path
    ic = np.array([1.0, 1.0, 1.0])
    # all 9 pairs are in some D_i, so the sum is (sum ic)^2 / n^2 = 1
    assert var_dependent(ic, dep, 0.5).variance == pytest.approx(1.0)


def test_var_dependent_negative_floors_with_warning():
    # period-3 oscillation on a path makes the distance<=2 pair sum negative
    net = Network.from_edges(6, [(i, i + 1) for i in range(5)])
    dep = dependency_neighborhoods(net)
    ic = np.array([1.0, -1.0, 0.0, 1.0, -1.0, 0.0])
    with pytest.warns(UserWarning, match="floored"):
        rep = var_dependent(ic, dep, 0.5)
    assert rep.variance == 0.0 and rep.floored


def test_var_dependent_size_mismatch(path3):
    dep = dependency_neighborhoods(path3)
    with pytest.raises(InvalidParameterError):
        var_dependent(np.zeros(5), dep, 0.5)


def test_bootstrap_variance_sane(estimate_400):
    data, result = estimate_400
    rep = var_bootstrap(data, result.fits, BernoulliP(0.35), result.psi_hat,
                        M=80, seed=1, draws=25)
    assert rep.method == "bootstrap" and rep.M == 80
    assert 0.0 < rep.variance < 0.01
    assert rep.n_failures <= 4


def test_bootstrap_deterministic_given_seed(estimate_400):
    data, result = estimate_400
    a = var_bootstrap(data, result.fits, BernoulliP(0.35), result.psi_hat,
                      M=30, seed=2, draws=10)
    b = var_bootstrap(data, result.fits, BernoulliP(0.35), result.psi_hat,
                      M=30, seed=2, draws=10)
    assert a.variance == b.variance


def test_bootstrap_requires_replicates(estimate_400):
    data, result = estimate_400
    with pytest.raises(InvalidParameterError):
        var_bootstrap(data, result.fits, BernoulliP(0.35), result.psi_hat, M=1)


def test_bootstrap_failure_budget(estimate_400):
    data, result = estimate_400
    with pytest.raises(BootstrapError):
        var_bootstrap(data, result.fits, BernoulliP(0.35), result.psi_hat,
                      M=20, seed=3, draws=10, max_failure_fraction=-0.5)


def test_variance_suite_attaches_reports(estimate_400):
    data, result = estimate_400
    out = variance_suite(result, data, BernoulliP(0.35),
                         methods=("iid", "dependent", "bootstrap"), M=30,
                         bootstrap_draws=10, seed=4)
    assert set(out) == {"iid", "dependent-ic", "bootstrap"}
    assert result.variances == out
    # dependence inflates the variance relative to iid on this preset
    assert out["dependent-ic"].variance > out["iid"].variance
    with pytest.raises(InvalidParameterError):
        variance_suite(result, data, BernoulliP(0.35), methods=("nope",))


def test_orthogonal_decomposition_reconstructs(estimate_400):
    data, result = estimate_400
    dec = orthogonal_decomposition(data, result.fits, result.per_unit_ic,
                                   result.epsilon_hat, result.psi_hat,
                                   draws=60, seed=5)
    assert np.allclose(dec.reconstruct(), result.per_unit_ic, atol=1e-12)
    assert dec.var_Y >= 0 is not None
    total = dec.total_variance
    assert total == pytest.approx(dec.var_Y + dec.var_X + dec.var_C)
    # the component split should roughly account for the dependent variance
    dep = dependency_neighborhoods(data.net)
    full = var_dependent(result.per_unit_ic, dep, result.psi_hat).variance
    assert 0.2 * full < total < 5.0 * full
