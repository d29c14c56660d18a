import numpy as np
import pytest

from nettmle import Network, SpecificationError, SummarySpec, apply_summaries, simulate
from nettmle.sem import (FixedFraction, LatentConfig, LogisticLaw, SemSpec,
                         draw_treatment, eval_term, expit, outcome_probability)
from nettmle.seeds import SIM, child_rng


def test_eval_own_and_neighbor_terms(path3):
    C = {"PA": np.array([1, 0, 1])}
    X = np.array([[1.0, 1.0, 0.0]])
    assert eval_term("PA", path3, C).tolist() == [[1.0, 0.0, 1.0]]
    assert eval_term("sum(PA)", path3, C).tolist() == [[0.0, 2.0, 0.0]]
    assert eval_term("mean(PA)", path3, C).tolist() == [[0.0, 1.0, 0.0]]
    assert eval_term("max(PA)", path3, C).tolist() == [[0.0, 1.0, 0.0]]
    assert eval_term("degree", path3, C).tolist() == [[1.0, 2.0, 1.0]]
    assert eval_term("sum(X)", path3, C, X).tolist() == [[1.0, 1.0, 1.0]]
    assert eval_term("sum(X)*sum(PA)", path3, C, X).tolist() == [[0.0, 2.0, 0.0]]


def test_neighbor_reductions_on_isolated_node():
    net = Network.from_edges(2, [])
    C = {"PA": np.array([1, 1])}
    for t in ("sum(PA)", "mean(PA)", "max(PA)"):
        assert eval_term(t, net, C).tolist() == [[0.0, 0.0]]


def test_unknown_column_raises(path3):
    with pytest.raises(SpecificationError):
        eval_term("sum(ZZ)", path3, {"PA": np.zeros(3)})


def test_x_in_covariate_context_raises(path3):
    with pytest.raises(SpecificationError):
        eval_term("sum(X)", path3, {"PA": np.zeros(3)}, None)


def test_treatment_side_terms_may_not_reference_x():
    with pytest.raises(SpecificationError):
        SummarySpec(w_terms=("sum(X)",), v_terms=("X",))


def test_apply_summaries_shapes(path3, small_summaries):
    C = {"PA": np.array([0, 1, 0])}
    W, V = apply_summaries(path3, small_summaries, C, np.array([1, 0, 1]))
    assert W.shape == (3, 1)
    assert V.shape == (3, 3)
    assert V[:, 0].tolist() == [1.0, 0.0, 1.0]       # own X column


def test_batched_x_columns(path3, small_summaries):
    from nettmle.sem import eval_terms
    C = {"PA": np.array([0, 1, 0])}
    X = np.array([[1, 0, 1], [0, 0, 0]], dtype=np.float64)
    V = eval_terms(small_summaries.v_terms, path3, C, X)
    assert V.shape == (2, 3, 3)
    assert V[1, :, 0].tolist() == [0.0, 0.0, 0.0]


def test_logistic_law_linear_predictor(path3, small_summaries):
    C = {"PA": np.array([1, 1, 0])}
    _, V = apply_summaries(path3, small_summaries, C, np.array([0, 1, 0]))
    law = LogisticLaw(-1.0, {"X": 1.2, "sum(X)": 0.4})
    eta = law.linear_predictor(list(small_summaries.v_terms), V)
    assert eta == pytest.approx([-1.0 + 0.4, -1.0 + 1.2, -1.0 + 0.4])


def test_logistic_law_unknown_term(path3, small_summaries):
    C = {"PA": np.array([1, 1, 0])}
    _, V = apply_summaries(path3, small_summaries, C, np.array([0, 1, 0]))
    with pytest.raises(SpecificationError):
        LogisticLaw(0.0, {"nope": 1.0}).linear_predictor(
            list(small_summaries.v_terms), V)


def test_simulate_deterministic(ring200, small_spec, small_summaries):
    a = simulate(ring200, small_spec, small_summaries, seed=3)
    b = simulate(ring200, small_spec, small_summaries, seed=3)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)
    c = simulate(ring200, small_spec, small_summaries, seed=4)
    assert not (np.array_equal(a.X, c.X) and np.array_equal(a.Y, c.Y))


def test_simulate_marginals(ring200, small_summaries):
    spec = SemSpec(covariate_law={"PA": 0.4},
                   treatment_law=LogisticLaw(0.0, {}),
                   outcome_law=LogisticLaw(10.0, {}))
    data = simulate(ring200, spec, small_summaries, seed=1)
    assert abs(data.C["PA"].mean() - 0.4) < 0.12
    assert abs(data.X.mean() - 0.5) < 0.12
    assert data.Y.mean() == 1.0          # saturated outcome law


def test_fixed_fraction_treatment(ring200, small_summaries):
    spec = SemSpec(covariate_law={"PA": 0.5}, treatment_law=FixedFraction(0.25),
                   outcome_law=LogisticLaw(0.0, {}))
    rng = child_rng(0, SIM)
    C = {"PA": np.zeros(200, dtype=np.int64)}
    x = draw_treatment(spec, ring200, C, rng, small_summaries)
    assert x.sum() == 50


def test_latent_requires_draw(path3, small_summaries):
    spec = SemSpec(covariate_law={"PA": 0.5},
                   treatment_law=LogisticLaw(0.0, {}),
                   outcome_law=LogisticLaw(0.0, {}),
                   latent=LatentConfig(1.0, 0.5))
    V = np.zeros((3, 3))
    with pytest.raises(SpecificationError):
        outcome_probability(spec, path3, V, small_summaries, U=None)


def test_latent_shifts_outcome_probability(path3, small_summaries):
    spec = SemSpec(covariate_law={"PA": 0.5},
                   treatment_law=LogisticLaw(0.0, {}),
                   outcome_law=LogisticLaw(0.0, {}),
                   latent=LatentConfig(1.0, 0.5))
    V = np.zeros((3, 3))
    U = np.array([2.0, 0.0, 0.0])
    p = outcome_probability(spec, path3, V, small_summaries, U)
    # node 0: own loading 2.0; node 1: neighbor loading 0.5*2; node 2: nothing
    assert p == pytest.approx([expit(2.0), expit(1.0), expit(0.0)])
