"""Command-line interface.

Subcommands:

    gen-network   write a synthetic network as an edge list
    simulate      simulate a dataset from a preset on a network
    estimate      targeted estimate + variances for one intervention
    oracle        ground-truth value by enumeration or Monte Carlo
    experiment    run a full Monte Carlo study from a TOML config
    report        re-render figures from an experiment output directory

Exit codes: 0 success, 2 configuration/usage error, 3 numeric failure.
All file outputs are written to a temporary file and renamed into place.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import pandas as pd

from .errors import ConfigError, NettmleError
from .graph import Network, read_edge_list, write_edge_list
from .harness import atomic_write_text, load_config, run_experiment
from .interventions import parse_intervention
from .oracle import psi_exact_enumeration, psi_monte_carlo_truth
from .presets import get_preset, make_network
from .sem import Dataset, SummarySpec, apply_summaries, simulate
from .tmle import TmleConfig, tmle_estimate
from .variance import variance_suite


def _add_gen_network(sub):
    p = sub.add_parser("gen-network", help="generate a synthetic network")
    p.add_argument("--model", required=True, choices=["smallworld", "prefattach"])
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--k", type=int, default=4, help="ring degree (smallworld)")
    p.add_argument("--p", type=float, default=0.1, help="rewire probability (smallworld)")
    p.add_argument("--m", type=int, default=2, help="edges per arrival (prefattach)")
    p.add_argument("--power", type=float, default=1.0, help="degree exponent (prefattach)")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True)


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="simulate a dataset from a preset")
    p.add_argument("--network", required=True, help="edge-list file")
    p.add_argument("--preset", default="gym")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, help="dataset CSV (node, C..., X, Y)")


def _add_estimate(sub):
    p = sub.add_parser("estimate", help="targeted estimate for one intervention")
    p.add_argument("--data", required=True, help="dataset CSV (node, C..., X, Y)")
    p.add_argument("--network", required=True, help="edge-list file")
    p.add_argument("--intervention", required=True)
    p.add_argument("--preset", default="gym", help="source of the summary terms")
    p.add_argument("--w-terms", default=None, help="comma-separated treatment-side terms")
    p.add_argument("--v-terms", default=None, help="comma-separated outcome-side terms")
    p.add_argument("--m-terms", default=None, help="outcome-model terms (default: all)")
    p.add_argument("--g-terms", default=None, help="treatment-model terms (default: all)")
    p.add_argument("--variance", default="dependent",
                   choices=["iid", "dependent", "bootstrap", "all"])
    p.add_argument("--estimand", default="marginal", choices=["marginal", "conditional"])
    p.add_argument("--draws", type=int, default=500)
    p.add_argument("--hbar", default="pooled-empirical", choices=["pooled-empirical", "model"])
    p.add_argument("--bootstrap-m", type=int, default=200, dest="bootstrap_M")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, help="result JSON")


def _add_oracle(sub):
    p = sub.add_parser("oracle", help="ground-truth value for a preset instance")
    p.add_argument("--network", required=True)
    p.add_argument("--preset", default="gym")
    p.add_argument("--intervention", required=True)
    p.add_argument("--method", default="mc", choices=["mc", "exact"])
    p.add_argument("--replicates", type=int, default=100000, help="Monte Carlo R")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, help="truth JSON")


def _add_experiment(sub):
    p = sub.add_parser("experiment", help="run a Monte Carlo study from a config")
    p.add_argument("--config", required=True, help="TOML experiment config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--replicates", type=int, default=None, help="override replicate count")
    p.add_argument("--no-figures", action="store_true")


def _add_report(sub):
    p = sub.add_parser("report", help="re-render figures from experiment tables")
    p.add_argument("--dir", required=True, help="directory holding the CSV tables")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nettmle")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen_network(sub)
    _add_simulate(sub)
    _add_estimate(sub)
    _add_oracle(sub)
    _add_experiment(sub)
    _add_report(sub)
    return parser


def _write_dataset(data: Dataset, path) -> None:
    cols = {"node": np.arange(data.n)}
    for name in sorted(data.C):
        cols[name] = data.C[name]
    cols["X"] = data.X
    cols["Y"] = data.Y
    atomic_write_text(path, pd.DataFrame(cols).to_csv(index=False))


def read_dataset(path, net: Network, summaries: SummarySpec) -> Dataset:
    df = pd.read_csv(path)
    required = {"node", "X", "Y"}
    missing = required - set(df.columns)
    if missing:
        raise ConfigError(f"dataset {path} missing columns {sorted(missing)}")
    if len(df) != net.n:
        raise ConfigError(f"dataset has {len(df)} rows but the network has {net.n} nodes")
    df = df.sort_values("node").reset_index(drop=True)
    if not np.array_equal(df["node"].to_numpy(), np.arange(net.n)):
        raise ConfigError("dataset node ids must be exactly 0..n-1")
    C = {c: df[c].to_numpy(np.int64) for c in df.columns if c not in required}
    X = df["X"].to_numpy(np.int64)
    Y = df["Y"].to_numpy(np.int64)
    W, V = apply_summaries(net, summaries, C, X)
    return Dataset(net=net, summaries=summaries, C=C, X=X, Y=Y, W=W, V=V)


def _terms(arg: str | None):
    if arg is None:
        return None
    return tuple(t.strip() for t in arg.split(",") if t.strip())


def _cmd_gen_network(args) -> int:
    kw = ({"k_ring": args.k, "p_rewire": args.p} if args.model == "smallworld"
          else {"m_attach": args.m, "power": args.power})
    net = make_network(args.model, args.n, seed=args.seed, **kw)
    tmp = args.out + ".tmp"
    write_edge_list(net, tmp)
    os.replace(tmp, args.out)
    return 0


def _cmd_simulate(args) -> int:
    net = read_edge_list(args.network)
    preset = get_preset(args.preset)
    data = simulate(net, preset.spec, preset.summaries, seed=args.seed)
    _write_dataset(data, args.out)
    return 0


def _cmd_estimate(args) -> int:
    net = read_edge_list(args.network)
    preset = get_preset(args.preset)
    summaries = preset.summaries
    if args.w_terms or args.v_terms:
        summaries = SummarySpec(
            w_terms=_terms(args.w_terms) or preset.summaries.w_terms,
            v_terms=_terms(args.v_terms) or preset.summaries.v_terms)
    data = read_dataset(args.data, net, summaries)
    iv = parse_intervention(args.intervention)
    config = TmleConfig(m_terms=_terms(args.m_terms), g_terms=_terms(args.g_terms),
                        draws=args.draws, estimand=args.estimand,
                        hbar_method=args.hbar, positivity="warn")
    result = tmle_estimate(data, iv, config, seed=args.seed)
    methods = ("iid", "dependent", "bootstrap") if args.variance == "all" else (args.variance,)
    variance_suite(result, data, iv, methods=methods, M=args.bootstrap_M, seed=args.seed)
    payload = {
        "psi_hat": result.psi_hat,
        "epsilon": result.epsilon_hat,
        "score_abs": result.score_abs,
        "intervention": result.intervention,
        "estimand": result.estimand_kind,
        "seed": args.seed,
        "n": net.n,
        "variances": {
            name: {"variance": rep.variance, "ci95": [rep.ci95.lower, rep.ci95.upper],
                   "ci_clipped": rep.ci95.clipped}
            for name, rep in result.variances.items()
        },
        "diagnostics": {
            "max_clever_weight": float(result.fits.weights.H.max()),
            "unsupported_counterfactual_values":
                len(result.positivity.unsupported) if result.positivity else 0,
            "m_coefficients": dict(zip(("(intercept)",) + result.fits.m_terms,
                                       result.fits.m_fit.coef.tolist())),
            "g_coefficients": dict(zip(("(intercept)",) + result.fits.g_terms,
                                       result.fits.g_fit.coef.tolist())),
        },
    }
    atomic_write_text(args.out, json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _cmd_oracle(args) -> int:
    net = read_edge_list(args.network)
    preset = get_preset(args.preset)
    iv = parse_intervention(args.intervention)
    if args.method == "exact":
        psi = psi_exact_enumeration(net, preset.spec, preset.summaries, iv)
        payload = {"psi": psi, "mc_se": 0.0, "method": "exact"}
    else:
        psi, se = psi_monte_carlo_truth(net, preset.spec, preset.summaries, iv,
                                        R=args.replicates, seed=args.seed)
        payload = {"psi": psi, "mc_se": se, "method": "mc", "R": args.replicates,
                   "seed": args.seed}
    payload.update({"intervention": args.intervention, "preset": args.preset, "n": net.n})
    atomic_write_text(args.out, json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.replicates is not None:
        cfg.replicates = args.replicates
    run_experiment(cfg, args.out, figures=not args.no_figures)
    return 0


def _cmd_report(args) -> int:
    from .plots import render_report
    tables = {}
    for name in ("coverage", "ci_length", "rescaled"):
        path = os.path.join(args.dir, f"{name}.csv")
        if os.path.exists(path):
            tables[name] = pd.read_csv(path)
    if not tables:
        raise ConfigError(f"no result tables found in {args.dir}")
    render_report(tables, args.dir)
    return 0


_COMMANDS = {
    "gen-network": _cmd_gen_network,
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "oracle": _cmd_oracle,
    "experiment": _cmd_experiment,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NettmleError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
