"""Delimited run artifacts and their companion figures.

Every report path writes a CSV and renders a PNG next to it so a run
directory is browsable without loading anything back into Python.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "write_csv",
    "runlog_csv",
    "runlog_figure",
    "metrics_csv",
    "metrics_figure",
    "profiles_csv",
    "profiles_figure",
    "tune_csv",
    "tune_figure",
    "comparison_csv",
    "comparison_figure",
]

_DPI = 120


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


# ------------------------------------------------------------------ train

def runlog_csv(log, path: str) -> None:
    write_csv(
        path,
        ["epoch", "loss", "val_rs", "val_cv", "val_cv_max", "krylov_rate",
         "elapsed_seconds"],
        log.rows(),
    )


def runlog_figure(log, path: str) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    t = [e.elapsed for e in log.entries]
    ax1.plot(t, [e.loss for e in log.entries], marker=".", label="train loss")
    rs = [e.val_rs for e in log.entries]
    if np.isfinite(rs).any():
        ax1.plot(t, rs, marker=".", label="val RS")
    ax1.set_xlabel("wall-clock seconds (incl. setup)")
    ax1.legend()
    cv = np.maximum([e.val_cv_max for e in log.entries], 1e-17)
    ax2.semilogy(t, cv, marker=".", color="tab:red")
    ax2.set_xlabel("wall-clock seconds (incl. setup)")
    ax2.set_ylabel("val max violation")
    _save(fig, path)


# ------------------------------------------------------------------- eval

def metrics_csv(metrics, path: str, ids=None) -> None:
    n = metrics.cv_rows.size
    ids = range(n) if ids is None else ids
    rows = [
        (i, metrics.rs_rows[j], metrics.cv_rows[j],
         int(metrics.oracle_mask[j]), int(metrics.optimal_rows[j]))
        for j, i in enumerate(ids)
    ]
    write_csv(path, ["instance", "rs", "cv", "oracle_ok", "optimal"], rows)


def metrics_figure(metrics, path: str) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    rs = metrics.rs_rows[metrics.oracle_mask]
    if rs.size:
        ax1.hist(np.log10(np.maximum(rs, 1e-12)), bins=30, color="tab:blue")
    ax1.set_xlabel("log10 relative suboptimality")
    ax1.set_ylabel("instances")
    ax2.hist(np.log10(np.maximum(metrics.cv_rows, 1e-17)), bins=30,
             color="tab:red")
    ax2.set_xlabel("log10 constraint violation")
    _save(fig, path)


# ------------------------------------------------------------------ bench

def profiles_csv(profiles: dict, path: str) -> None:
    rows = []
    for label, profile in profiles.items():
        for k, cv in profile:
            worst = float(np.max(cv)) if np.ndim(cv) else float(cv)
            rows.append((label, k, worst))
    write_csv(path, ["config", "iterations", "max_cv"], rows)


def profiles_figure(profiles: dict, path: str, threshold: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    for label, profile in profiles.items():
        ks = [k for k, _ in profile]
        worst = [max(float(np.max(cv)), 1e-17) for _, cv in profile]
        ax.loglog(ks, worst, marker="o", label=label)
    if threshold is not None:
        ax.axhline(threshold, color="gray", ls="--", lw=1)
    ax.set_xlabel("iterations")
    ax.set_ylabel("max violation")
    ax.legend()
    _save(fig, path)


# ------------------------------------------------------------------- tune

def tune_csv(report, path: str) -> None:
    rows = [
        ("sigma", report.sigma_grid[i], report.sigma_max_cv[i],
         report.sigma_mean_subopt[i], int(report.sigma_candidate[i]),
         int(report.sigma_grid[i] == report.chosen_sigma))
        for i in range(report.sigma_grid.size)
    ]
    rows += [
        ("n_iter", report.n_iter_grid[i], report.n_iter_max_cv[i],
         report.n_iter_mean_subopt[i], int(report.n_iter_candidate[i]),
         int(report.n_iter_grid[i] == report.chosen_n_iter))
        for i in range(report.n_iter_grid.size)
    ]
    write_csv(path, ["stage", "value", "max_cv", "mean_subopt", "candidate",
                     "chosen"], rows)


def tune_figure(report, path: str) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.loglog(report.sigma_grid, np.maximum(report.sigma_max_cv, 1e-17),
               label="max cv")
    ax1.loglog(report.sigma_grid, report.sigma_mean_subopt, label="subopt")
    ax1.axvline(report.chosen_sigma, color="gray", ls="--", lw=1)
    ax1.set_xlabel("sigma")
    ax1.legend()
    ax2.semilogy(report.n_iter_grid, np.maximum(report.n_iter_max_cv, 1e-17),
                 marker="o", label="max cv")
    ax2.axvline(report.chosen_n_iter, color="gray", ls="--", lw=1)
    ax2.set_xlabel("iterations")
    ax2.legend()
    _save(fig, path)


# ----------------------------------------------------------------- ablate

def comparison_csv(path: str, header, rows) -> None:
    write_csv(path, header, rows)


def comparison_figure(labels, series: dict, path: str, log_scale=True) -> None:
    """Grouped bars: one group per label, one bar per series entry."""
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    x = np.arange(len(labels), dtype=float)
    width = 0.8 / max(len(series), 1)
    for j, (name, values) in enumerate(series.items()):
        vals = np.maximum(np.asarray(values, dtype=float), 1e-17)
        ax.bar(x + j * width, vals, width, label=name)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(labels, rotation=15, ha="right")
    if log_scale:
        ax.set_yscale("log")
    ax.legend()
    _save(fig, path)
