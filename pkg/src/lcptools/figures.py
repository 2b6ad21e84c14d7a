"""Matplotlib figures written next to the delimited reports.

Each report-producing CLI path saves a PNG alongside its CSV: timing curves
for the bench, error histograms for field comparisons, and error-vs-fraction
summaries for the ablation. All rendering is headless (Agg).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evalbench import HISTOGRAM_BINS, ErrorReport, TimingReport

_METHOD_STYLE = {
    "mc-serial": ("tab:red", "o"),
    "mc-parallel": ("tab:blue", "s"),
    "surrogate-cpu": ("tab:green", "^"),
}


def save_bench_figure(report: TimingReport, path: str | Path) -> Path:
    """Compute time vs Monte Carlo sample count, one line per method."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    r_axis = [row.r for row in report.rows if row.method == "mc-serial"]
    for method in ("mc-serial", "mc-parallel", "surrogate-cpu"):
        times = [row.compute_seconds for row in report.rows if row.method == method]
        if not times:
            continue
        color, marker = _METHOD_STYLE[method]
        ax.plot(r_axis[: len(times)], times, marker=marker, color=color, label=method)
    ax.set_xlabel("Monte Carlo samples r")
    ax.set_ylabel("compute time (s)")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_error_figure(report: ErrorReport, path: str | Path) -> Path:
    """Histogram of absolute errors with quartile markers."""
    path = Path(path)
    edges = np.linspace(0.0, 1.0, HISTOGRAM_BINS + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(centers, report.histogram, width=1.0 / HISTOGRAM_BINS, color="tab:orange", alpha=0.8)
    for value, label, color in (
        (report.q1, "q1", "gray"),
        (report.median, "median", "black"),
        (report.q3, "q3", "gray"),
    ):
        ax.axvline(value, color=color, linestyle="--", linewidth=1, label=f"{label}={value:.4f}")
    ax.set_xlabel("absolute error")
    ax.set_ylabel("cells")
    ax.set_yscale("symlog")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_ablation_figure(
    fractions: list[float], reports: list[ErrorReport], path: str | Path
) -> Path:
    """Median error with interquartile band versus training-set fraction."""
    path = Path(path)
    med = [rep.median for rep in reports]
    q1 = [rep.q1 for rep in reports]
    q3 = [rep.q3 for rep in reports]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(fractions, q1, q3, alpha=0.3, color="tab:blue", label="q1..q3")
    ax.plot(fractions, med, marker="o", color="tab:blue", label="median")
    ax.plot(fractions, [rep.max for rep in reports], marker=".", linestyle=":",
            color="tab:gray", label="max")
    ax.set_xlabel("fraction of training samples")
    ax.set_ylabel("absolute error")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
