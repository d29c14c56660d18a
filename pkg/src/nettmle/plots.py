"""Figure rendering for experiment reports: coverage by sample size and CI
type, mean CI length, and histograms of rescaled estimates against the
standard normal density. Written as PNG files next to the tables."""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from scipy.stats import norm


def plot_coverage(coverage, path) -> None:
    ivs = sorted(coverage["intervention"].unique())
    fig, axes = plt.subplots(1, len(ivs), figsize=(4 * len(ivs), 3.2),
                             sharey=True, squeeze=False)
    for ax, ivt in zip(axes[0], ivs):
        sub = coverage[coverage["intervention"] == ivt]
        for ci_type, grp in sub.groupby("ci_type"):
            grp = grp.sort_values("n")
            ax.errorbar(grp["n"], grp["coverage"], yerr=grp["mc_error"],
                        marker="o", capsize=3, label=ci_type)
        ax.axhline(0.95, color="gray", linestyle="--", linewidth=0.8)
        ax.set_xscale("log")
        ax.set_xlabel("n")
        ax.set_title(ivt, fontsize=9)
    axes[0, 0].set_ylabel("CI coverage")
    axes[0, -1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ci_length(ci_length, path) -> None:
    ivs = sorted(ci_length["intervention"].unique())
    fig, axes = plt.subplots(1, len(ivs), figsize=(4 * len(ivs), 3.2),
                             sharey=True, squeeze=False)
    for ax, ivt in zip(axes[0], ivs):
        sub = ci_length[ci_length["intervention"] == ivt]
        for ci_type, grp in sub.groupby("ci_type"):
            grp = grp.sort_values("n")
            ax.plot(grp["n"], grp["mean_length"], marker="o", label=ci_type)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_title(ivt, fontsize=9)
    axes[0, 0].set_ylabel("mean CI length")
    axes[0, -1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_normality(rescaled, path) -> None:
    ns = sorted(rescaled["n"].unique())
    ivs = sorted(rescaled["intervention"].unique())
    fig, axes = plt.subplots(len(ns), len(ivs),
                             figsize=(3.2 * len(ivs), 2.6 * len(ns)), squeeze=False)
    grid = np.linspace(-4, 4, 200)
    for r, n in enumerate(ns):
        for c, ivt in enumerate(ivs):
            ax = axes[r, c]
            z = rescaled[(rescaled["n"] == n) & (rescaled["intervention"] == ivt)]["rescaled"]
            z = z[np.isfinite(z)]
            if len(z):
                ax.hist(z, bins=25, density=True, alpha=0.7)
            ax.plot(grid, norm.pdf(grid), "k-", linewidth=1)
            ax.set_title(f"n={n} {ivt}", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report(tables: dict, out_dir) -> list:
    """Render all report figures; returns the written paths."""
    written = []
    jobs = [("coverage", plot_coverage, "coverage.png"),
            ("ci_length", plot_ci_length, "ci_length.png"),
            ("rescaled", plot_normality, "normality.png")]
    for key, fn, fname in jobs:
        df = tables.get(key)
        if df is None or df.empty:
            continue
        path = os.path.join(out_dir, fname)
        fn(df, path)
        written.append(path)
    return written
