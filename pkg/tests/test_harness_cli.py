import json
import os

import numpy as np
import pandas as pd
import pytest

from nettmle.cli import main
from nettmle.errors import ConfigError
from nettmle.harness import ExperimentConfig, load_config, run_experiment

TINY_TOML = """
[experiment]
name = "tiny"
master_seed = 7
replicates = 4
preset = "gym"
interventions = ["bernoulli:0.35", "topdegree:0.10"]
variance = ["iid", "dependent"]
draws = 40
truth_R = 3000

[network]
family = "smallworld"
sizes = [120]
k_ring = 4
p_rewire = 0.1
"""


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    cfg_path = root / "tiny.toml"
    cfg_path.write_text(TINY_TOML)
    out = root / "out"
    tables = run_experiment(str(cfg_path), str(out))
    return str(cfg_path), str(out), tables


def test_config_parsing(tiny_run):
    cfg_path, _, _ = tiny_run
    cfg = load_config(cfg_path)
    assert cfg.replicates == 4
    assert cfg.sizes == (120,)
    assert cfg.network_kw == {"k_ring": 4, "p_rewire": 0.1}


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({
            "experiment": {"master_seed": 1, "interventions": [], "typo_key": 3},
            "network": {"family": "smallworld", "sizes": [50]},
        })


def test_config_rejects_bad_values():
    base = {"experiment": {"master_seed": 1, "interventions": ["bernoulli:0.5"]},
            "network": {"family": "smallworld", "sizes": [50]}}
    bad = {k: dict(v) for k, v in base.items()}
    bad["experiment"]["replicates"] = 0
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)
    bad = {k: dict(v) for k, v in base.items()}
    bad["experiment"]["variance"] = ["nope"]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)
    bad = {k: dict(v) for k, v in base.items()}
    bad["experiment"]["interventions"] = ["warp:1"]
    with pytest.raises(Exception):
        ExperimentConfig.from_dict(bad)
    with pytest.raises(ConfigError, match="missing"):
        ExperimentConfig.from_dict({"experiment": {}})


def test_experiment_output_files(tiny_run):
    _, out, _ = tiny_run
    for f in ("results.csv", "coverage.csv", "ci_length.csv", "bias.csv",
              "rescaled.csv", "manifest.json", "truth.json"):
        assert os.path.exists(os.path.join(out, f)), f
    # figures rendered alongside the tables
    pngs = [f for f in os.listdir(out) if f.endswith(".png")]
    assert pngs


def test_experiment_tables_keyed_correctly(tiny_run):
    _, out, tables = tiny_run
    cov = tables["coverage"]
    assert set(cov.columns) >= {"n", "intervention", "ci_type", "coverage",
                                "mc_error", "replicates"}
    assert set(cov["ci_type"]) == {"iid", "dependent-ic"}
    assert set(cov["intervention"]) == {"bernoulli:0.35", "topdegree:0.10"}
    assert ((cov["coverage"] >= 0) & (cov["coverage"] <= 1)).all()
    # binomial error bars: p +/- 1.96 sqrt(p(1-p)/R)
    p = cov["coverage"]
    expected = 1.959963984540054 * np.sqrt(p * (1 - p) / cov["replicates"])
    assert np.allclose(cov["mc_error"], expected)


def test_experiment_results_round_trip(tiny_run):
    _, out, tables = tiny_run
    back = pd.read_csv(os.path.join(out, "results.csv"))
    assert len(back) == len(tables["results"])
    assert np.allclose(back["psi_hat"], tables["results"]["psi_hat"])


def test_experiment_deterministic(tmp_path, tiny_run):
    cfg_path, out, tables = tiny_run
    out2 = tmp_path / "again"
    tables2 = run_experiment(cfg_path, str(out2))
    assert np.allclose(tables["results"]["psi_hat"], tables2["results"]["psi_hat"])
    a = open(os.path.join(out, "results.csv")).read()
    b = open(os.path.join(str(out2), "results.csv")).read()
    assert a == b


def test_experiment_worker_pool_matches_serial(tmp_path, tiny_run):
    cfg_path, out, tables = tiny_run
    os.environ["NETTMLE_WORKERS"] = "2"
    try:
        tables2 = run_experiment(cfg_path, str(tmp_path / "par"), figures=False)
    finally:
        del os.environ["NETTMLE_WORKERS"]
    assert np.allclose(tables["results"]["psi_hat"], tables2["results"]["psi_hat"])


def test_experiment_scores_tiny(tiny_run):
    _, _, tables = tiny_run
    assert (tables["results"]["score_abs"] < 1e-8).all()


def test_manifest_contents(tiny_run):
    _, out, _ = tiny_run
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert manifest["config"]["master_seed"] == 7
    assert "config_hash" in manifest and len(manifest["config_hash"]) == 64
    assert "nettmle" in manifest["versions"]


def test_shipped_example_config_parses():
    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    cfg = load_config(os.path.join(here, "configs", "study.toml"))
    assert cfg.preset == "gym"
    assert len(cfg.interventions) == 4


# ---------------------------------------------------------------------------
# CLI


def test_cli_gen_network_idempotent(tmp_path):
    out = tmp_path / "net.edges"
    args = ["gen-network", "--model", "smallworld", "--n", "100", "--k", "10",
            "--p", "0.1", "--seed", "7", "--out", str(out)]
    assert main(args) == 0
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first


def test_cli_simulate_estimate_oracle(tmp_path):
    net = tmp_path / "net.edges"
    data = tmp_path / "data.csv"
    res = tmp_path / "result.json"
    truth = tmp_path / "truth.json"
    assert main(["gen-network", "--model", "smallworld", "--n", "300", "--k", "8",
                 "--p", "0.1", "--seed", "3", "--out", str(net)]) == 0
    assert main(["simulate", "--network", str(net), "--preset", "gym",
                 "--seed", "5", "--out", str(data)]) == 0
    df = pd.read_csv(data)
    assert list(df.columns) == ["node", "PA", "X", "Y"]
    assert len(df) == 300

    assert main(["estimate", "--data", str(data), "--network", str(net),
                 "--intervention", "bernoulli:0.35", "--variance", "all",
                 "--draws", "60", "--bootstrap-m", "30",
                 "--seed", "1", "--out", str(res)]) == 0
    payload = json.load(open(res))
    assert set(payload["variances"]) == {"iid", "dependent-ic", "bootstrap"}
    assert payload["score_abs"] < 1e-8
    for rep in payload["variances"].values():
        lo, hi = rep["ci95"]
        assert 0.0 <= lo <= payload["psi_hat"] <= hi <= 1.0

    assert main(["oracle", "--network", str(net), "--intervention",
                 "bernoulli:0.35", "--replicates", "5000", "--seed", "2",
                 "--out", str(truth)]) == 0
    t = json.load(open(truth))
    assert abs(t["psi"] - payload["psi_hat"]) < 6 * np.sqrt(
        payload["variances"]["dependent-ic"]["variance"])


def test_cli_experiment_and_report(tmp_path):
    cfg = tmp_path / "tiny.toml"
    cfg.write_text(TINY_TOML)
    out = tmp_path / "exp"
    assert main(["experiment", "--config", str(cfg), "--out", str(out),
                 "--replicates", "2", "--no-figures"]) == 0
    assert not [f for f in os.listdir(out) if f.endswith(".png")]
    assert main(["report", "--dir", str(out)]) == 0
    assert [f for f in os.listdir(out) if f.endswith(".png")]


def test_cli_exit_codes(tmp_path):
    # missing config file -> 2
    assert main(["experiment", "--config", str(tmp_path / "nope.toml"),
                 "--out", str(tmp_path / "o")]) == 2
    # unknown intervention -> numeric/config failure, nonzero
    net = tmp_path / "n.edges"
    main(["gen-network", "--model", "smallworld", "--n", "50", "--k", "4",
          "--p", "0.1", "--seed", "1", "--out", str(net)])
    data = tmp_path / "d.csv"
    main(["simulate", "--network", str(net), "--seed", "1", "--out", str(data)])
    rc = main(["estimate", "--data", str(data), "--network", str(net),
               "--intervention", "warp:9", "--seed", "1",
               "--out", str(tmp_path / "r.json")])
    assert rc == 3
    # report on an empty dir -> 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", "--dir", str(empty)]) == 2


def test_cli_dataset_validation(tmp_path):
    net = tmp_path / "n.edges"
    main(["gen-network", "--model", "smallworld", "--n", "50", "--k", "4",
          "--p", "0.1", "--seed", "1", "--out", str(net)])
    bad = tmp_path / "bad.csv"
    bad.write_text("node,PA,X,Y\n0,1,0,1\n")  # wrong row count
    rc = main(["estimate", "--data", str(bad), "--network", str(net),
               "--intervention", "bernoulli:0.5", "--seed", "1",
               "--out", str(tmp_path / "r.json")])
    assert rc == 2
