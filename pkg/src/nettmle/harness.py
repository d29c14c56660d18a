"""Monte Carlo experiment runner.

Reads a TOML experiment config, generates one network per sample size,
simulates replicate datasets, estimates under each intervention, and writes
coverage / CI-length / bias / rescaled-estimate tables plus a manifest and
summary figures. The whole run is a deterministic function of (config,
master seed).

Config grammar (TOML):

    [experiment]
    name = "study"                # used in the manifest
    master_seed = 11
    replicates = 200
    preset = "gym"                # see presets.get_preset
    interventions = ["bernoulli:0.35", "topdegree:0.10"]
    variance = ["iid", "dependent"]          # any of iid, dependent, bootstrap
    estimand = "marginal"                     # or "conditional"
    draws = 200                               # counterfactual summary draws
    hbar = "pooled-empirical"                 # or "model"
    m_terms = []                              # [] means all outcome terms
    g_terms = []                              # [] means all treatment terms
    bootstrap_M = 200
    bootstrap_draws = 20
    truth_R = 20000                           # Monte Carlo truth replicates
    conditional_truth_draws = 400

    [network]
    family = "smallworld"                     # or "prefattach"
    sizes = [500, 1000]
    k_ring = 4                                # smallworld knobs
    p_rewire = 0.1
    # m_attach = 2, power = 1.0               # prefattach knobs

Workers: set NETTMLE_WORKERS to parallelize replicates; results are reduced
in replicate-index order regardless, so output is worker-count independent.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, NettmleError
from .graph import dependency_neighborhoods
from .interventions import parse_intervention
from .oracle import conditional_mean_given_c, psi_monte_carlo_truth, read_truth_table, \
    truth_key, write_truth_table
from .presets import get_preset, make_network
from .seeds import EXPERIMENT, child_rng
from .sem import draw_covariates, simulate
from .tmle import TmleConfig, tmle_estimate
from .variance import variance_suite

VARIANCE_METHODS = ("iid", "dependent", "bootstrap")
Z95 = 1.959963984540054


@dataclass
class ExperimentConfig:
    name: str
    master_seed: int
    replicates: int
    preset: str
    interventions: tuple
    variance: tuple
    estimand: str
    draws: int
    hbar: str
    m_terms: tuple | None
    g_terms: tuple | None
    bootstrap_M: int
    bootstrap_draws: int
    truth_R: int
    conditional_truth_draws: int
    family: str
    sizes: tuple
    network_kw: dict

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        try:
            exp = dict(raw["experiment"])
            net = dict(raw["network"])
        except KeyError as e:
            raise ConfigError(f"missing config table {e}") from e
        known_exp = {"name", "master_seed", "replicates", "preset", "interventions",
                     "variance", "estimand", "draws", "hbar", "m_terms", "g_terms",
                     "bootstrap_M", "bootstrap_draws", "truth_R", "conditional_truth_draws"}
        unknown = set(exp) - known_exp
        if unknown:
            raise ConfigError(f"unknown [experiment] keys: {sorted(unknown)}")
        try:
            variance = tuple(exp.get("variance", ["iid", "dependent"]))
            for v in variance:
                if v not in VARIANCE_METHODS:
                    raise ConfigError(f"unknown variance method {v!r}")
            cfg = ExperimentConfig(
                name=str(exp.get("name", "experiment")),
                master_seed=int(exp["master_seed"]),
                replicates=int(exp.get("replicates", 200)),
                preset=str(exp.get("preset", "gym")),
                interventions=tuple(exp["interventions"]),
                variance=variance,
                estimand=str(exp.get("estimand", "marginal")),
                draws=int(exp.get("draws", 200)),
                hbar=str(exp.get("hbar", "pooled-empirical")),
                m_terms=tuple(exp["m_terms"]) if exp.get("m_terms") else None,
                g_terms=tuple(exp["g_terms"]) if exp.get("g_terms") else None,
                bootstrap_M=int(exp.get("bootstrap_M", 200)),
                bootstrap_draws=int(exp.get("bootstrap_draws", 20)),
                truth_R=int(exp.get("truth_R", 20000)),
                conditional_truth_draws=int(exp.get("conditional_truth_draws", 400)),
                family=str(net["family"]),
                sizes=tuple(int(s) for s in net["sizes"]),
                network_kw={k: v for k, v in net.items() if k not in ("family", "sizes")},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad experiment config: {e}") from e
        if cfg.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if cfg.estimand not in ("marginal", "conditional"):
            raise ConfigError(f"unknown estimand {cfg.estimand!r}")
        # validate interventions eagerly
        for text in cfg.interventions:
            parse_intervention(text)
        return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config parse error in {path}: {e}") from e
    return ExperimentConfig.from_dict(raw)


def _n_workers() -> int:
    raw = os.environ.get("NETTMLE_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"NETTMLE_WORKERS must be an integer, got {raw!r}")


def _replicate_seed(master_seed: int, i_n: int, k: int) -> int:
    return int(child_rng(master_seed, EXPERIMENT, 1, i_n, k).integers(2 ** 31))


def _network_seed(master_seed: int, i_n: int) -> int:
    return int(child_rng(master_seed, EXPERIMENT, 0, i_n).integers(2 ** 31))


def _truth_seed(master_seed: int, i_n: int, i_iv: int) -> int:
    return int(child_rng(master_seed, EXPERIMENT, 2, i_n, i_iv).integers(2 ** 31))


def _run_replicate(args):
    """One replicate: simulate, estimate under every intervention, attach
    variances. Top-level so worker processes can unpickle it."""
    (net, preset, cfg, i_n, k) = args
    seed = _replicate_seed(cfg.master_seed, i_n, k)
    data = simulate(net, preset.spec, preset.summaries, seed=seed)
    dep = dependency_neighborhoods(net)
    # per-replicate positivity scans are diagnostics, not estimation steps;
    # skipped here for speed
    tconf = TmleConfig(m_terms=cfg.m_terms, g_terms=cfg.g_terms, draws=cfg.draws,
                       estimand=cfg.estimand, hbar_method=cfg.hbar, positivity="skip")
    rows = []
    for text in cfg.interventions:
        iv = parse_intervention(text)
        result = tmle_estimate(data, iv, tconf, seed=seed)
        reports = variance_suite(result, data, iv, methods=cfg.variance, dep=dep,
                                 M=cfg.bootstrap_M, bootstrap_draws=cfg.bootstrap_draws,
                                 seed=seed)
        row = {
            "n": net.n,
            "intervention": text,
            "replicate": k,
            "psi_hat": result.psi_hat,
            "epsilon": result.epsilon_hat,
            "score_abs": result.score_abs,
        }
        if cfg.estimand == "conditional":
            truth, truth_se = conditional_mean_given_c(
                net, preset.spec, preset.summaries, iv, data.C,
                draws=cfg.conditional_truth_draws, seed=seed)
            row["truth"] = truth
            row["truth_se"] = truth_se
        for name, rep in reports.items():
            row[f"var_{name}"] = rep.variance
            row[f"lo_{name}"] = rep.ci95.lower
            row[f"hi_{name}"] = rep.ci95.upper
        rows.append(row)
    return k, rows


def _marginal_truths(net, preset, cfg, i_n, out_dir) -> dict:
    """Monte Carlo truth per intervention, cached in truth.json keyed by the
    instance description."""
    cache_path = os.path.join(out_dir, "truth.json")
    cache = read_truth_table(cache_path) if os.path.exists(cache_path) else {}
    truths = {}
    dirty = False
    for i_iv, text in enumerate(cfg.interventions):
        key = truth_key(net.n, f"{cfg.family}:{_network_seed(cfg.master_seed, i_n)}",
                        cfg.preset, text) + f"|R={cfg.truth_R}"
        if key not in cache:
            iv = parse_intervention(text)
            psi, se = psi_monte_carlo_truth(net, preset.spec, preset.summaries, iv,
                                            R=cfg.truth_R,
                                            seed=_truth_seed(cfg.master_seed, i_n, i_iv))
            cache[key] = {"psi": psi, "mc_se": se, "R": cfg.truth_R}
            dirty = True
        truths[text] = cache[key]["psi"]
    if dirty:
        write_truth_table(cache_path, cache)
    return truths


def run_experiment(config, out_dir, figures: bool = True) -> dict:
    """Run the full study described by `config` (path or ExperimentConfig) and
    write results.csv, coverage.csv, ci_length.csv, bias.csv, rescaled.csv,
    manifest.json, truth.json, and summary figures into out_dir.

    Returns {"results": DataFrame, "coverage": DataFrame, ...}."""
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    os.makedirs(out_dir, exist_ok=True)
    preset = get_preset(cfg.preset)

    all_rows = []
    for i_n, n in enumerate(cfg.sizes):
        net = make_network(cfg.family, n, seed=_network_seed(cfg.master_seed, i_n),
                           **cfg.network_kw)
        truths = None
        if cfg.estimand == "marginal":
            truths = _marginal_truths(net, preset, cfg, i_n, out_dir)
        tasks = [(net, preset, cfg, i_n, k) for k in range(cfg.replicates)]
        workers = _n_workers()
        if workers > 1 and cfg.replicates > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                done = list(pool.map(_run_replicate, tasks, chunksize=1))
        else:
            done = [_run_replicate(t) for t in tasks]
        done.sort(key=lambda kr: kr[0])   # replicate-index order for bit-stable output
        for _, rows in done:
            for row in rows:
                if truths is not None:
                    row["truth"] = truths[row["intervention"]]
                all_rows.append(row)

    results = pd.DataFrame(all_rows)
    tables = summarize(results, cfg)
    tables["results"] = results
    _write_tables(tables, out_dir)
    _write_manifest(cfg, out_dir)
    if figures:
        from .plots import render_report
        render_report(tables, out_dir)
    return tables


def summarize(results: pd.DataFrame, cfg: ExperimentConfig) -> dict:
    """Coverage (with binomial error bars), CI length, bias, and rescaled
    estimates, each keyed by (n, intervention, ci_type) where applicable."""
    cov_rows, len_rows, bias_rows, z_rows = [], [], [], []
    for (n, ivt), grp in results.groupby(["n", "intervention"], sort=True):
        truth = grp["truth"]
        psi = grp["psi_hat"]
        err = psi - truth
        R = len(grp)
        sd = float(err.std(ddof=1)) if R > 1 else float("nan")
        bias_rows.append({
            "n": n, "intervention": ivt, "replicates": R,
            "truth_mean": float(truth.mean()),
            "psi_hat_mean": float(psi.mean()),
            "bias": float(err.mean()),
            "se_of_mean": sd / np.sqrt(R) if R > 1 else float("nan"),
            "sd_psi_hat": sd,
        })
        z_vals = err / sd if R > 1 else err * float("nan")
        for k, z in zip(grp["replicate"], z_vals):
            z_rows.append({"n": n, "intervention": ivt, "replicate": int(k),
                           "rescaled": float(z)})
        for method in cfg.variance:
            lo, hi = grp[f"lo_{_mkey(method)}"], grp[f"hi_{_mkey(method)}"]
            covered = ((lo <= truth) & (truth <= hi)).astype(float)
            p = float(covered.mean())
            cov_rows.append({
                "n": n, "intervention": ivt, "ci_type": _mkey(method),
                "coverage": p,
                "mc_error": Z95 * np.sqrt(p * (1 - p) / R),
                "replicates": R,
            })
            len_rows.append({
                "n": n, "intervention": ivt, "ci_type": _mkey(method),
                "mean_length": float((hi - lo).mean()),
            })
    return {
        "coverage": pd.DataFrame(cov_rows),
        "ci_length": pd.DataFrame(len_rows),
        "bias": pd.DataFrame(bias_rows),
        "rescaled": pd.DataFrame(z_rows),
    }


def _mkey(method: str) -> str:
    return "dependent-ic" if method == "dependent" else method


def atomic_write_text(path, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_tables(tables: dict, out_dir) -> None:
    for name in ("results", "coverage", "ci_length", "bias", "rescaled"):
        df = tables.get(name)
        if df is not None:
            atomic_write_text(os.path.join(out_dir, f"{name}.csv"),
                              df.to_csv(index=False))


def _write_manifest(cfg: ExperimentConfig, out_dir) -> None:
    from . import __version__
    payload = {k: (list(v) if isinstance(v, tuple) else v)
               for k, v in vars(cfg).items()}
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    manifest = {
        "config": payload,
        "config_hash": digest,
        "versions": {"nettmle": __version__, "numpy": np.__version__,
                     "pandas": pd.__version__},
    }
    atomic_write_text(os.path.join(out_dir, "manifest.json"),
                      json.dumps(manifest, indent=2, sort_keys=True))


def ensure_no_numeric_failures(tables: dict) -> None:
    if not np.isfinite(tables["results"]["psi_hat"]).all():
        raise NettmleError("non-finite estimates in experiment output")
