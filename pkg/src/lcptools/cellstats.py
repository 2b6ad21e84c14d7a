"""Per-cell ensemble statistics and training-sample packing.

Each 2D cell is modeled by a 4-variate Gaussian over its vertex values:
ensemble-mean vector and the unbiased (1/(M-1)) sample covariance across
members. Vertices are ordered counterclockwise from the lower-left corner:

    Y3 (cx, cy+1) --- Y2 (cx+1, cy+1)
     |                  |
    Y0 (cx, cy)   --- Y1 (cx+1, cy)

The covariance is stored packed as 10 values
[var0, var1, var2, var3, c01, c02, c03, c12, c13, c23]; symmetry is
structural. Training samples follow the fixed 16-float layout
[mu0..mu3, var0..var3, c01, c02, c03, c12, c13, c23, isovalue, lcp].
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    MalformedManifest,
    MissingFile,
    OutOfRange,
    OutOfRangeLcp,
    SizeMismatch,
    TooFewMembers,
)
from .rng import mix64

# packed index -> (i, j) of the 4x4 matrix
_PACK_PAIRS = ((0, 0), (1, 1), (2, 2), (3, 3),
               (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

SAMPLE_WIDTH = 16  # 4 means + 10 covariances + isovalue + lcp
FEATURE_WIDTH = 15  # a sample minus its lcp label


@dataclass(frozen=True)
class CellGaussian:
    """Mean vector (4,) and packed covariance (10,) of one cell."""

    mu: np.ndarray
    cov: np.ndarray

    def matrix(self) -> np.ndarray:
        """Unpack to the full symmetric 4x4 covariance matrix."""
        full = np.empty((4, 4), dtype=np.float64)
        for idx, (i, j) in enumerate(_PACK_PAIRS):
            full[i, j] = self.cov[idx]
            full[j, i] = self.cov[idx]
        return full


@dataclass(frozen=True)
class CellStatsGrid:
    """Row-major grid of cell Gaussians for one time step.

    ``mu`` is (cells_h * cells_w, 4) and ``cov`` is (cells_h * cells_w, 10);
    cell index = cy * cells_w + cx.
    """

    cells_w: int
    cells_h: int
    mu: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        n = self.cells_w * self.cells_h
        if self.mu.shape != (n, 4) or self.cov.shape != (n, 10):
            raise SizeMismatch(
                f"stats arrays {self.mu.shape}/{self.cov.shape} do not match {n} cells"
            )

    def __len__(self) -> int:
        return self.cells_w * self.cells_h

    def cell(self, index: int) -> CellGaussian:
        if not 0 <= index < len(self):
            raise OutOfRange(f"cell index {index} outside grid of {len(self)}")
        return CellGaussian(self.mu[index], self.cov[index])


def _cell_moments(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean (4,) and packed covariance (10,) of an (M, 4) sample block.

    Shared by the single-cell and whole-field paths so both produce
    bit-identical results.
    """
    m = samples.shape[0]
    mu = np.add.reduce(samples, axis=0) / m
    d = samples - mu
    cov = np.empty(10, dtype=np.float64)
    for idx, (i, j) in enumerate(_PACK_PAIRS):
        cov[idx] = np.dot(d[:, i], d[:, j]) / (m - 1)
    return mu, cov


def _gather_cell(data_t: np.ndarray, cx: int, cy: int) -> np.ndarray:
    """(M, 4) vertex samples of cell (cx, cy) from an (M, H, W) slab."""
    return np.stack(
        (
            data_t[:, cy, cx],
            data_t[:, cy, cx + 1],
            data_t[:, cy + 1, cx + 1],
            data_t[:, cy + 1, cx],
        ),
        axis=1,
    )


def cell_statistics(dataset, t: int, cx: int, cy: int) -> CellGaussian:
    """Ensemble mean and covariance of one cell at time step ``t``.

    The pipeline computes these on normalized data (so fixed isovalues stay
    meaningful); the arithmetic itself does not require it, and the CLI is
    where that discipline is enforced.
    """
    _check_stats_pre(dataset, t)
    if not (0 <= cx < dataset.width - 1 and 0 <= cy < dataset.height - 1):
        raise OutOfRange(f"cell ({cx}, {cy}) outside {dataset.width - 1}x{dataset.height - 1}")
    mu, cov = _cell_moments(_gather_cell(dataset.data[:, t], cx, cy))
    return CellGaussian(mu, cov)


def field_statistics(dataset, t: int) -> CellStatsGrid:
    """Cell statistics for every cell of time step ``t``, row-major.

    Evaluates the same per-cell kernel as :func:`cell_statistics`, so the
    result is bit-identical to mapping it over all cells.
    """
    _check_stats_pre(dataset, t)
    cells_w = dataset.width - 1
    cells_h = dataset.height - 1
    data_t = dataset.data[:, t]
    mu = np.empty((cells_w * cells_h, 4), dtype=np.float64)
    cov = np.empty((cells_w * cells_h, 10), dtype=np.float64)
    idx = 0
    for cy in range(cells_h):
        for cx in range(cells_w):
            mu[idx], cov[idx] = _cell_moments(_gather_cell(data_t, cx, cy))
            idx += 1
    return CellStatsGrid(cells_w=cells_w, cells_h=cells_h, mu=mu, cov=cov)


def _check_stats_pre(dataset, t: int) -> None:
    if dataset.members < 2:
        raise TooFewMembers(f"covariance needs M >= 2, got {dataset.members}")
    if not 0 <= t < dataset.timesteps:
        raise OutOfRange(f"timestep {t} outside [0, {dataset.timesteps})")


def make_training_sample(cell: CellGaussian, isovalue: float, lcp: float) -> np.ndarray:
    """Pack one cell + isovalue + label into the 16-float sample layout."""
    if not 0.0 <= lcp <= 1.0:
        raise OutOfRangeLcp(f"lcp must be in [0, 1], got {lcp}")
    out = np.empty(SAMPLE_WIDTH, dtype=np.float32)
    out[0:4] = cell.mu
    out[4:14] = cell.cov
    out[14] = isovalue
    out[15] = lcp
    return out


def build_training_set(
    dataset,
    timesteps: list[int],
    isovalues: list[float],
    mc,
    *,
    workers: int = 1,
    drop_zero_lcp: bool = False,
) -> np.ndarray:
    """One sample per (cell, timestep, isovalue); labels from Monte Carlo.

    Rows are ordered chronologically: timestep-major, then isovalue, then
    row-major cell order. Each (timestep, isovalue) pair gets its own label
    stream derived as ``mix64(mc.seed, t * 2**20 + isovalue_index)``, so the
    whole set is a pure function of ``mc.seed``. With ``drop_zero_lcp`` rows
    whose label is exactly 0 are discarded (off by default; mirrors archives
    whose published sample counts imply such filtering).
    """
    from .pmc import lcp_field_parallel, lcp_field_serial

    blocks = []
    for t in timesteps:
        stats = field_statistics(dataset, t)
        n = len(stats)
        for j, iso in enumerate(isovalues):
            sub = dataclasses.replace(mc, seed=mix64(mc.seed, t * (1 << 20) + j))
            if workers > 1:
                field = lcp_field_parallel(stats, iso, sub, workers)
            else:
                field = lcp_field_serial(stats, iso, sub)
            rows = np.empty((n, SAMPLE_WIDTH), dtype=np.float32)
            rows[:, 0:4] = stats.mu
            rows[:, 4:14] = stats.cov
            rows[:, 14] = iso
            rows[:, 15] = field.probs.reshape(-1)
            if drop_zero_lcp:
                rows = rows[rows[:, 15] > 0.0]
            blocks.append(rows)
    if not blocks:
        return np.empty((0, SAMPLE_WIDTH), dtype=np.float32)
    return np.concatenate(blocks, axis=0)


def save_training_set(
    samples: np.ndarray,
    path: str | Path,
    *,
    isovalues: list[float],
    source: str,
    mc_seed: int,
    r: int,
) -> Path:
    """Write samples as flat little-endian float32 records + JSON sidecar."""
    path = Path(path)
    samples = np.ascontiguousarray(samples, dtype="<f4")
    if samples.ndim != 2 or samples.shape[1] != SAMPLE_WIDTH:
        raise SizeMismatch(f"expected (n, {SAMPLE_WIDTH}) samples, got {samples.shape}")
    samples.tofile(path)
    sidecar = {
        "count": int(samples.shape[0]),
        "isovalues": [float(v) for v in isovalues],
        "source_manifest": source,
        "mc_seed": int(mc_seed),
        "r": int(r),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))
    return path


def load_training_set(path: str | Path) -> tuple[np.ndarray, dict]:
    """Read a training set; returns ((n, 16) float32 array, sidecar dict)."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"training set not found: {path}")
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % SAMPLE_WIDTH != 0:
        raise SizeMismatch(f"{path}: {raw.size} floats is not a multiple of {SAMPLE_WIDTH}")
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.is_file():
        raise MissingFile(f"sidecar not found: {sidecar_path}")
    try:
        sidecar = json.loads(sidecar_path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"{sidecar_path}: {exc}") from exc
    samples = raw.reshape(-1, SAMPLE_WIDTH)
    if "count" in sidecar and int(sidecar["count"]) != samples.shape[0]:
        raise SizeMismatch(
            f"{path}: sidecar declares {sidecar['count']} records, file holds {samples.shape[0]}"
        )
    return samples, sidecar
