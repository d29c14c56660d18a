import numpy as np
import pytest


def pytest_terminal_summary(terminalreporter):
    """Show one PASS/FAIL line per acceptance criterion after the run."""
    try:
        from test_acceptance import ACCEPTANCE_LINES
    except ImportError:
        return
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

from nettmle import Network, SummarySpec, gen_small_world
from nettmle.sem import LogisticLaw, SemSpec


@pytest.fixture
def path3():
    """Three nodes in a path: 0 - 1 - 2."""
    return Network.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def small_spec():
    return SemSpec(
        covariate_law={"PA": 0.3},
        treatment_law=LogisticLaw(-0.5, {"PA": 0.8}),
        outcome_law=LogisticLaw(-1.0, {"X": 1.2, "PA": 0.5, "sum(X)": 0.4}),
    )


@pytest.fixture
def small_summaries():
    return SummarySpec(w_terms=("PA",), v_terms=("X", "PA", "sum(X)"))


@pytest.fixture
def ring200():
    return gen_small_world(200, 4, 0.1, seed=5)


def random_logistic_instance(rng, n_max=6):
    """A randomized small binary instance: network, laws, summaries."""
    n = int(rng.integers(2, n_max + 1))
    possible = [(i, j) for i in range(n) for j in range(i + 1, n)]
    mask = rng.random(len(possible)) < 0.5
    net = Network.from_edges(n, [e for e, m in zip(possible, mask) if m])
    spec = SemSpec(
        covariate_law={"PA": float(rng.uniform(0.2, 0.8))},
        treatment_law=LogisticLaw(float(rng.normal(0, 0.7)),
                                  {"PA": float(rng.normal(0, 1.0))}),
        outcome_law=LogisticLaw(float(rng.normal(0, 0.7)),
                                {"X": float(rng.normal(0, 1.0)),
                                 "PA": float(rng.normal(0, 1.0)),
                                 "sum(X)": float(rng.normal(0, 0.5)),
                                 "sum(PA)": float(rng.normal(0, 0.5))}),
    )
    summaries = SummarySpec(w_terms=("PA", "sum(PA)"),
                            v_terms=("X", "PA", "sum(X)", "sum(PA)"))
    return net, spec, summaries
