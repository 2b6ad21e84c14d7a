"""Timing and accuracy harnesses: MC serial vs parallel vs surrogate.

Timing uses a monotonic clock and records the best of N repetitions. Error
reports summarize pixel-wise absolute differences between a predicted and a
ground-truth field (count, quartiles, mean, max, 32-bin histogram), the same
statistics used for the sample-count ablation.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cellstats import FEATURE_WIDTH, CellStatsGrid, field_statistics
from .errors import DimMismatch, OutOfRange
from .pmc import LcpField, McConfig, lcp_field_parallel, lcp_field_serial
from .surrogate import MlpConfig, MlpModel, TrainConfig, forward, grid_features, load_model, train

HISTOGRAM_BINS = 32

TIMING_CSV_HEADER = "method,r,workers,load_s,compute_s,model_load_s"
ERROR_CSV_HEADER = "count,q1,median,q3,mean,max"


@dataclass(frozen=True)
class TimingRow:
    method: str  # mc-serial | mc-parallel | surrogate-cpu
    r: int  # Monte Carlo samples; 0 for the surrogate
    workers: int
    load_data_seconds: float
    compute_seconds: float
    model_load_seconds: float  # 0 for MC methods


@dataclass(frozen=True)
class TimingReport:
    rows: tuple[TimingRow, ...]


@dataclass(frozen=True)
class ErrorReport:
    """Statistics of per-cell absolute errors, all within [0, 1]."""

    count: int
    q1: float
    median: float
    q3: float
    mean: float
    max: float
    histogram: np.ndarray  # HISTOGRAM_BINS counts over [0, 1]

    @classmethod
    def from_abs_errors(cls, err: np.ndarray) -> "ErrorReport":
        err = np.asarray(err, dtype=np.float64).reshape(-1)
        hist, _ = np.histogram(err, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
        return cls(
            count=int(err.size),
            q1=float(np.quantile(err, 0.25)),
            median=float(np.quantile(err, 0.5)),
            q3=float(np.quantile(err, 0.75)),
            mean=float(err.mean()),
            max=float(err.max()),
            histogram=hist,
        )


def error_report(pred: LcpField, truth: LcpField) -> ErrorReport:
    """Pixel-wise |pred - truth| statistics; fields must share dimensions."""
    if (pred.cells_w, pred.cells_h) != (truth.cells_w, truth.cells_h):
        raise DimMismatch(
            f"field dims {pred.cells_w}x{pred.cells_h} vs {truth.cells_w}x{truth.cells_h}"
        )
    err = np.abs(pred.probs.astype(np.float64) - truth.probs.astype(np.float64))
    return ErrorReport.from_abs_errors(err)


def evaluate_samples(model: MlpModel, samples: np.ndarray) -> ErrorReport:
    """Prediction error of a model against labeled samples (one per cell)."""
    arr = np.asarray(samples, dtype=np.float32)
    pred = forward(model, arr[:, :FEATURE_WIDTH])
    return ErrorReport.from_abs_errors(np.abs(pred - arr[:, FEATURE_WIDTH]))


def ablate_training_size(
    samples: np.ndarray,
    fractions: list[float],
    mcfg: MlpConfig,
    tcfg: TrainConfig,
    eval_samples: np.ndarray,
) -> list[ErrorReport]:
    """Train on growing chronological prefixes and evaluate each model.

    ``samples`` must already be in chronological order; fraction f trains on
    the first ceil(f * n) rows. Returns one report per fraction, in order.
    """
    arr = np.asarray(samples, dtype=np.float32)
    n = arr.shape[0]
    reports = []
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise OutOfRange(f"fractions must lie in (0, 1], got {f}")
        take = math.ceil(f * n)
        model, _ = train(arr[:take], mcfg, tcfg)
        reports.append(evaluate_samples(model, eval_samples))
    return reports


def bench(
    stats: CellStatsGrid,
    isovalue: float,
    r_values: list[int],
    workers: int,
    model: MlpModel | str | Path,
    repetitions: int = 3,
    *,
    dataset=None,
    timestep: int = 0,
) -> TimingReport:
    """Wall-clock comparison of the three LCP paths over ``r_values``.

    For every r there are three rows: mc-serial, mc-parallel (with
    ``workers``), and surrogate-cpu (whose compute does not depend on r; its
    row keeps r=0). Each measurement is the best of ``repetitions`` runs of a
    monotonic clock. ``load_data_seconds`` is the time to compute cell
    statistics when ``dataset`` is given; ``model_load_seconds`` is the
    one-time model file read when ``model`` is a path.
    """
    if repetitions < 1:
        raise OutOfRange(f"repetitions must be >= 1, got {repetitions}")

    def best_of(fn):
        best = math.inf
        result = None
        for _ in range(repetitions):
            t0 = time.perf_counter()
            result = fn()
            best = min(best, time.perf_counter() - t0)
        return best, result

    load_s = 0.0
    if dataset is not None:
        load_s, _ = best_of(lambda: field_statistics(dataset, timestep))

    model_load_s = 0.0
    if isinstance(model, (str, Path)):
        model_path = Path(model)
        model_load_s, model = best_of(lambda: load_model(model_path))

    feats = grid_features(stats, isovalue)

    rows = []
    for r in r_values:
        cfg = McConfig(r=r, seed=0)
        serial_s, _ = best_of(lambda: lcp_field_serial(stats, isovalue, cfg))
        rows.append(TimingRow("mc-serial", r, 1, load_s, serial_s, 0.0))
        parallel_s, _ = best_of(lambda: lcp_field_parallel(stats, isovalue, cfg, workers))
        rows.append(TimingRow("mc-parallel", r, workers, load_s, parallel_s, 0.0))
        surrogate_s, _ = best_of(lambda: forward(model, feats))
        rows.append(TimingRow("surrogate-cpu", 0, 1, load_s, surrogate_s, model_load_s))
    return TimingReport(rows=tuple(rows))


def write_timing_csv(report: TimingReport, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMING_CSV_HEADER.split(","))
        for row in report.rows:
            writer.writerow(
                [
                    row.method,
                    row.r,
                    row.workers,
                    f"{row.load_data_seconds:.6f}",
                    f"{row.compute_seconds:.6f}",
                    f"{row.model_load_seconds:.6f}",
                ]
            )
    return path


def write_error_csv(report: ErrorReport, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ERROR_CSV_HEADER.split(","))
        writer.writerow(
            [
                report.count,
                f"{report.q1:.8f}",
                f"{report.median:.8f}",
                f"{report.q3:.8f}",
                f"{report.mean:.8f}",
                f"{report.max:.8f}",
            ]
        )
    return path


def write_histogram_csv(report: ErrorReport, path: str | Path) -> Path:
    path = Path(path)
    edges = np.linspace(0.0, 1.0, HISTOGRAM_BINS + 1)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "count"])
        for i in range(HISTOGRAM_BINS):
            writer.writerow([f"{edges[i]:.6f}", f"{edges[i + 1]:.6f}", int(report.histogram[i])])
    return path
