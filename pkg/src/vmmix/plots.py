"""Figure rendering for path, cross-validation, and benchmark reports.

Figures are a presentation layer over the CSV/JSON outputs: every number
shown here is also in the delimited files, and the determinism contract
applies to those files, not to the rendered images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_coefficient_paths(em_path, out_path, irls_path=None, title=None):
    """Coefficient trajectories against log(1/tau); failures truncate lines."""
    fig, ax = plt.subplots(figsize=(7, 5))
    x = -np.log(em_path.taus)

    if irls_path is not None:
        ok = np.array([pt.status == "converged" for pt in irls_path.points])
        coefs = irls_path.coefficients
        for j in range(coefs.shape[1]):
            cj = np.where(ok, coefs[:, j], np.nan)
            ax.plot(x, cj, color="black", lw=1.0, alpha=0.8)
        ax.plot([], [], color="black", lw=1.0, label="penalized IRLS")

    coefs = em_path.coefficients
    for j in range(coefs.shape[1]):
        ax.plot(x, coefs[:, j], color="grey", lw=1.0, alpha=0.8)
    ax.plot([], [], color="grey", lw=1.0, label="EM")

    ax.set_xlabel(r"$\log(1/\tau)$")
    ax.set_ylabel("coefficient")
    ax.invert_xaxis()
    if title:
        ax.set_title(title)
    ax.legend(loc="best", frameon=False)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_cv_curve(cv_result, out_path, title=None):
    """Mean validation loss with fold spread against log(1/tau)."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    x = -np.log(cv_result.taus)
    losses = np.full((cv_result.taus.size, cv_result.folds), np.nan)
    idx = {float(t): i for i, t in enumerate(cv_result.taus)}
    for row in cv_result.table:
        losses[idx[row["tau"]], row["fold"]] = row["loss"]
    mean = losses.mean(axis=1)
    se = losses.std(axis=1, ddof=1) / np.sqrt(cv_result.folds)
    ax.errorbar(x, mean, yerr=se, fmt="o-", ms=3, lw=1, capsize=2,
                color="tab:blue")
    ax.axvline(-np.log(cv_result.tau_star), color="tab:red", ls="--", lw=1,
               label=rf"selected $\tau$ = {cv_result.tau_star:.4g}")
    ax.set_xlabel(r"$\log(1/\tau)$")
    ax.set_ylabel("validation loss")
    ax.invert_xaxis()
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_bench_times(report, out_path, title=None):
    """Wall time per (algorithm, start), annotated with non-converged statuses."""
    rows = report.rows
    labels = sorted({(r.algorithm, r.start) for r in rows})
    fig, ax = plt.subplots(figsize=(max(6.5, 0.9 * len(labels)), 4.5))
    xs = np.arange(len(labels))
    for i, key in enumerate(labels):
        cell = [r for r in rows if (r.algorithm, r.start) == key]
        t = np.mean([r.wall_time for r in cell])
        bad = [r.status for r in cell if r.status != "converged"]
        ax.bar(i, t, color="tab:red" if bad else "tab:blue", width=0.7)
        if bad:
            ax.text(i, t, bad[0], ha="center", va="bottom", fontsize=7,
                    rotation=45)
    ax.set_xticks(xs)
    ax.set_xticklabels([f"{a}\n{s}" for a, s in labels], fontsize=7)
    ax.set_ylabel("wall time (s)")
    ax.set_yscale("log")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_quantile_summary(rows, out_path, title=None):
    """Per-method boxplots of the replicated quantile-study metrics."""
    methods = ["unpenalized", "lasso", "double_pareto"]
    metrics_keys = ["est_error", "oos_check_loss", "model_size"]
    fig, axes = plt.subplots(1, 3, figsize=(11, 4))
    for ax, key in zip(axes, metrics_keys):
        data = [[row[key] for row in rows if row["method"] == m]
                for m in methods]
        ax.boxplot(data, tick_labels=["plain", "lasso", "dPareto"])
        ax.set_title(key.replace("_", " "))
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_objective_trace(trace, out_path, title=None):
    """Objective versus iteration on a log-distance-to-best scale."""
    trace = np.asarray(trace, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    best = trace.min()
    gap = np.maximum(trace - best, 1e-16)
    ax.semilogy(np.arange(trace.size), gap, lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective gap to best")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
