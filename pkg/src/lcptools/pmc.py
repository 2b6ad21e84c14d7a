"""Probabilistic marching squares: Monte Carlo level-crossing probabilities.

For each cell, r vertex vectors are drawn from the fitted 4-variate Gaussian
(mean mu, covariance C factorized as L L^T) and the level-crossing
probability is the crossing fraction k/r. Because every cell's draws come
from a counter-based stream keyed by (seed, cell index), the serial and
parallel drivers are bit-identical for any worker count or partitioning.

Conventions that the model leaves open and we therefore fix:

* vertex values equal to the isovalue count as crossings (measure zero under
  the continuous model, but decisive for deterministic cells);
* rank-deficient covariances get a jitter ladder lambda =
  jitter_base * (trace/4) * 10**attempt added to the diagonal;
* normal variates via inverse CDF of Philox uniforms (see :mod:`lcptools.rng`).
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .cellstats import CellGaussian, CellStatsGrid
from .errors import (
    MalformedManifest,
    MissingFile,
    NonFiniteInput,
    NotDiagonal,
    NotPositiveSemiDefinite,
    OutOfRange,
    SizeMismatch,
)
from .rng import mix64, standard_normals


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo sampling parameters."""

    r: int
    seed: int
    jitter_base: float = 1e-9
    jitter_retries: int = 3

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if not self.jitter_base > 0:
            raise ValueError(f"jitter_base must be > 0, got {self.jitter_base}")
        if self.jitter_retries < 0:
            raise ValueError(f"jitter_retries must be >= 0, got {self.jitter_retries}")


@dataclass(frozen=True)
class LcpField:
    """Per-cell crossing probabilities, stored float32 row-major.

    Metadata mirrors the serialization sidecar: the isovalue, Monte Carlo
    sample count and seed that produced the field (r=0, seed=0 for surrogate
    predictions) and the producing method.
    """

    cells_w: int
    cells_h: int
    probs: np.ndarray
    isovalue: float = 0.0
    r: int = 0
    seed: int = 0
    method: str = "mc-serial"

    def __post_init__(self):
        if self.probs.shape != (self.cells_h, self.cells_w):
            raise SizeMismatch(
                f"probs shape {self.probs.shape} != ({self.cells_h}, {self.cells_w})"
            )
        if self.probs.size and (self.probs.min() < 0.0 or self.probs.max() > 1.0):
            raise OutOfRange("probabilities outside [0, 1]")


class _DeterministicMarker:
    """Sentinel: the cell has zero covariance, no sampling is needed."""

    def __repr__(self) -> str:  # pragma: no cover
        return "Deterministic"


DETERMINISTIC = _DeterministicMarker()


def cholesky_psd(cell: CellGaussian, cfg: McConfig) -> np.ndarray | _DeterministicMarker:
    """Lower-triangular factor of the cell covariance, jittered if needed.

    Returns :data:`DETERMINISTIC` when the covariance trace is exactly zero.
    Otherwise tries a plain Cholesky first, then adds
    ``jitter_base * (trace/4) * 10**attempt`` to the diagonal for up to
    ``jitter_retries`` attempts before giving up.
    """
    if not (np.all(np.isfinite(cell.mu)) and np.all(np.isfinite(cell.cov))):
        raise NonFiniteInput("cell statistics contain non-finite values")
    cov = cell.matrix()
    trace = float(np.trace(cov))
    if trace == 0.0:
        return DETERMINISTIC
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    for attempt in range(cfg.jitter_retries):
        lam = cfg.jitter_base * (trace / 4.0) * 10.0 ** attempt
        try:
            return np.linalg.cholesky(cov + lam * np.eye(4))
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveSemiDefinite(
        f"covariance not factorizable after {cfg.jitter_retries} jitter attempts"
    )


def crossing_test(values, isovalue: float) -> bool:
    """True iff a level set at ``isovalue`` passes through the vertex values.

    Crossing means the values are neither all above nor all below the
    isovalue; ties count as crossings.
    """
    values = np.asarray(values)
    return not (bool(np.all(values > isovalue)) or bool(np.all(values < isovalue)))


def _crossing_fraction(x: np.ndarray, isovalue: float) -> float:
    """Fraction of sample columns of (4, r) that cross the isovalue."""
    above = np.all(x > isovalue, axis=0).sum()
    below = np.all(x < isovalue, axis=0).sum()
    r = x.shape[1]
    return float(r - above - below) / r


def cell_lcp_mc(cell: CellGaussian, isovalue: float, cfg: McConfig, cell_index: int) -> float:
    """Monte Carlo crossing probability k/r for one cell.

    Draws ``cfg.r`` vectors mu + L z with z standard normal from the stream
    keyed by ``mix64(cfg.seed, cell_index)``. Deterministic cells skip
    sampling and return 0 or 1 from the mean vector alone.
    """
    factor = cholesky_psd(cell, cfg)
    if factor is DETERMINISTIC:
        return 1.0 if crossing_test(cell.mu, isovalue) else 0.0
    z = standard_normals(mix64(cfg.seed, cell_index), (4, cfg.r))
    x = cell.mu[:, None] + factor @ z
    return _crossing_fraction(x, isovalue)


def cell_lcp_closed_form_diag(cell: CellGaussian, isovalue: float) -> float:
    """Exact crossing probability when the four vertices are independent.

    With b_i = Phi((s - mu_i) / sigma_i) (and b_i = [s > mu_i] for
    sigma_i = 0), the probability that the vertices are neither all above
    nor all below the level is 1 - prod(b_i) - prod(1 - b_i). Serves as an
    independent oracle for the sampler; the general correlated case has no
    closed form.
    """
    if np.any(cell.cov[4:] != 0.0):
        raise NotDiagonal("closed form requires zero off-diagonal covariances")
    var = cell.cov[:4]
    below = np.empty(4)
    for i in range(4):
        if var[i] == 0.0:
            below[i] = 1.0 if isovalue > cell.mu[i] else 0.0
        else:
            below[i] = ndtr((isovalue - cell.mu[i]) / np.sqrt(var[i]))
    return float(1.0 - np.prod(below) - np.prod(1.0 - below))


def _lcp_rows(
    mu: np.ndarray,
    cov: np.ndarray,
    isovalue: float,
    cfg: McConfig,
    first_cell_index: int,
) -> np.ndarray:
    """Probabilities for a contiguous block of cells (row-major order)."""
    n = mu.shape[0]
    out = np.empty(n, dtype=np.float32)
    for i in range(n):
        out[i] = cell_lcp_mc(CellGaussian(mu[i], cov[i]), isovalue, cfg, first_cell_index + i)
    return out


def lcp_field_serial(stats: CellStatsGrid, isovalue: float, cfg: McConfig) -> LcpField:
    """Monte Carlo probabilities for every cell, computed in-process."""
    probs = _lcp_rows(stats.mu, stats.cov, isovalue, cfg, 0)
    return LcpField(
        cells_w=stats.cells_w,
        cells_h=stats.cells_h,
        probs=probs.reshape(stats.cells_h, stats.cells_w),
        isovalue=isovalue,
        r=cfg.r,
        seed=cfg.seed,
        method="mc-serial",
    )


def lcp_field_parallel(
    stats: CellStatsGrid, isovalue: float, cfg: McConfig, workers: int
) -> LcpField:
    """Same probabilities as the serial driver, split over worker processes.

    Work is partitioned in contiguous row blocks; per-cell keyed streams make
    the result bit-identical to :func:`lcp_field_serial` regardless of
    ``workers``.
    """
    if workers < 1:
        raise OutOfRange(f"workers must be >= 1, got {workers}")
    if workers == 1:
        field = lcp_field_serial(stats, isovalue, cfg)
        return LcpField(
            cells_w=field.cells_w,
            cells_h=field.cells_h,
            probs=field.probs,
            isovalue=isovalue,
            r=cfg.r,
            seed=cfg.seed,
            method="mc-parallel",
        )

    row_blocks = np.array_split(np.arange(stats.cells_h), min(workers, stats.cells_h))
    row_blocks = [b for b in row_blocks if b.size]
    probs = np.empty(stats.cells_h * stats.cells_w, dtype=np.float32)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = []
        for block in row_blocks:
            lo = int(block[0]) * stats.cells_w
            hi = (int(block[-1]) + 1) * stats.cells_w
            futures.append(
                (lo, hi, pool.submit(_lcp_rows, stats.mu[lo:hi], stats.cov[lo:hi], isovalue, cfg, lo))
            )
        for lo, hi, fut in futures:
            probs[lo:hi] = fut.result()
    return LcpField(
        cells_w=stats.cells_w,
        cells_h=stats.cells_h,
        probs=probs.reshape(stats.cells_h, stats.cells_w),
        isovalue=isovalue,
        r=cfg.r,
        seed=cfg.seed,
        method="mc-parallel",
    )


def save_lcp_field(field: LcpField, path: str | Path) -> Path:
    """Write probabilities as little-endian float32 plus a JSON sidecar."""
    path = Path(path)
    np.ascontiguousarray(field.probs, dtype="<f4").tofile(path)
    sidecar = {
        "cells_w": field.cells_w,
        "cells_h": field.cells_h,
        "isovalue": float(field.isovalue),
        "r": int(field.r),
        "seed": int(field.seed),
        "method": field.method,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))
    return path


def load_lcp_field(path: str | Path) -> LcpField:
    """Read a field written by :func:`save_lcp_field`."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"field not found: {path}")
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.is_file():
        raise MissingFile(f"sidecar not found: {sidecar_path}")
    try:
        sidecar = json.loads(sidecar_path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"{sidecar_path}: {exc}") from exc
    try:
        cells_w = int(sidecar["cells_w"])
        cells_h = int(sidecar["cells_h"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedManifest(f"{sidecar_path}: missing or bad dimensions") from exc
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != cells_w * cells_h:
        raise SizeMismatch(f"{path}: holds {raw.size} floats, expected {cells_w * cells_h}")
    return LcpField(
        cells_w=cells_w,
        cells_h=cells_h,
        probs=raw.reshape(cells_h, cells_w),
        isovalue=float(sidecar.get("isovalue", 0.0)),
        r=int(sidecar.get("r", 0)),
        seed=int(sidecar.get("seed", 0)),
        method=str(sidecar.get("method", "mc-serial")),
    )
