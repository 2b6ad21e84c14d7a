"""2D time-varying ensemble scalar fields: definition, I/O, generation, splits.

A dataset is M ensemble members by T time steps of width x height grids.
On disk each grid is a headerless little-endian float32 file (row-major),
described by a JSON manifest. In memory values are widened to float64 for
statistics; all containers are immutable after construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    AlreadyNormalized,
    DegenerateRange,
    InvalidSpec,
    MalformedManifest,
    MissingFile,
    NonFiniteValue,
    OutOfRange,
    SizeMismatch,
)

_MANIFEST_KEYS = ("name", "width", "height", "members", "timesteps", "dtype", "layout", "files")


@dataclass(frozen=True)
class ScalarField2D:
    """One member's grid at one time step; ``values`` is (height, width)."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise OutOfRange(f"grid must be at least 2x2, got {self.width}x{self.height}")
        if self.values.shape != (self.height, self.width):
            raise SizeMismatch(
                f"values shape {self.values.shape} != ({self.height}, {self.width})"
            )
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteValue("scalar field contains non-finite values")


@dataclass(frozen=True)
class EnsembleDataset:
    """M x T collection of scalar fields sharing one grid.

    ``data`` has shape (members, timesteps, height, width), float64,
    write-protected. ``norm_min``/``norm_max`` are the global extremes used
    for min-max normalization and are meaningful only when ``normalized``.
    """

    name: str
    members: int
    timesteps: int
    width: int
    height: int
    data: np.ndarray
    normalized: bool = False
    norm_min: float = 0.0
    norm_max: float = 0.0

    def __post_init__(self):
        if self.members < 2:
            raise InvalidSpec(f"need at least 2 members, got {self.members}")
        if self.timesteps < 1:
            raise InvalidSpec(f"need at least 1 timestep, got {self.timesteps}")
        expected = (self.members, self.timesteps, self.height, self.width)
        if self.data.shape != expected:
            raise SizeMismatch(f"data shape {self.data.shape} != {expected}")
        if self.width < 2 or self.height < 2:
            raise InvalidSpec(f"grid must be at least 2x2, got {self.width}x{self.height}")
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteValue("dataset contains non-finite values")
        if self.normalized and (self.data.min() < 0.0 or self.data.max() > 1.0):
            raise OutOfRange("normalized dataset has values outside [0, 1]")
        self.data.setflags(write=False)

    def field(self, member: int, timestep: int) -> ScalarField2D:
        if not (0 <= member < self.members and 0 <= timestep < self.timesteps):
            raise OutOfRange(f"field ({member}, {timestep}) outside dataset")
        return ScalarField2D(self.width, self.height, self.data[member, timestep])


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic ensemble generator.

    Each member at time t is a shared base field (sum of ``modes`` random
    sinusoids whose phases advance by ``drift`` per step) plus member-specific
    smooth sinusoidal noise of amplitude ``noise_scale``. Smooth noise keeps
    neighbouring vertices correlated, so off-diagonal covariances are
    nontrivial.
    """

    width: int
    height: int
    members: int
    timesteps: int
    modes: int = 6
    noise_scale: float = 0.25
    drift: float = 0.35

    def validate(self) -> None:
        for name in ("width", "height", "members", "timesteps", "modes"):
            if getattr(self, name) <= 0:
                raise InvalidSpec(f"{name} must be positive, got {getattr(self, name)}")
        if self.width < 2 or self.height < 2:
            raise InvalidSpec("grid must be at least 2x2")
        if self.members < 2:
            raise InvalidSpec("need at least 2 members")
        if not math.isfinite(self.noise_scale) or self.noise_scale < 0:
            raise InvalidSpec(f"noise_scale must be finite and >= 0, got {self.noise_scale}")
        if not math.isfinite(self.drift):
            raise InvalidSpec("drift must be finite")


def load_dataset(manifest_path: str | Path) -> EnsembleDataset:
    """Load a dataset described by a JSON manifest.

    Raw files are headerless little-endian float32, row-major, exactly
    width*height values each; paths in the manifest are relative to the
    manifest's directory. The optional ``normalized``/``norm_min``/``norm_max``
    keys let a normalized dataset round-trip through disk; plain manifests
    load with ``normalized=False``.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MissingFile(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedManifest(f"{manifest_path}: {exc}") from exc

    for key in _MANIFEST_KEYS:
        if key not in manifest:
            raise MalformedManifest(f"{manifest_path}: missing key {key!r}")
    if manifest["dtype"] != "f32le":
        raise MalformedManifest(f"unsupported dtype {manifest['dtype']!r}")
    if manifest["layout"] != "row-major":
        raise MalformedManifest(f"unsupported layout {manifest['layout']!r}")

    try:
        width = int(manifest["width"])
        height = int(manifest["height"])
        members = int(manifest["members"])
        timesteps = int(manifest["timesteps"])
    except (TypeError, ValueError) as exc:
        raise MalformedManifest(f"{manifest_path}: non-integer dimensions") from exc

    files = manifest["files"]
    if not isinstance(files, list) or len(files) != members:
        raise MalformedManifest(f"files must list {members} members")
    if any(not isinstance(row, list) or len(row) != timesteps for row in files):
        raise MalformedManifest(f"each member must list {timesteps} timestep files")

    base = manifest_path.parent
    data = np.empty((members, timesteps, height, width), dtype=np.float64)
    for m, row in enumerate(files):
        for t, rel in enumerate(row):
            raw_path = base / rel
            if not raw_path.is_file():
                raise MissingFile(f"raw file not found: {raw_path}")
            raw = np.fromfile(raw_path, dtype="<f4")
            if raw.size != width * height:
                raise SizeMismatch(
                    f"{raw_path}: holds {raw.size} floats, expected {width * height}"
                )
            if not np.all(np.isfinite(raw)):
                raise NonFiniteValue(f"{raw_path}: contains non-finite values")
            data[m, t] = raw.reshape(height, width).astype(np.float64)

    return EnsembleDataset(
        name=str(manifest["name"]),
        members=members,
        timesteps=timesteps,
        width=width,
        height=height,
        data=data,
        normalized=bool(manifest.get("normalized", False)),
        norm_min=float(manifest.get("norm_min", 0.0)),
        norm_max=float(manifest.get("norm_max", 0.0)),
    )


def save_dataset(dataset: EnsembleDataset, manifest_path: str | Path) -> Path:
    """Write a dataset as manifest + raw float32 files; returns manifest path.

    Raw files land in a sibling directory named ``<manifest stem>_data``.
    Values are stored as float32, so saving is lossless exactly when the
    in-memory values are float32-representable (always true for loaded and
    freshly generated datasets; normalized values are quantized).
    """
    manifest_path = Path(manifest_path)
    data_dir = manifest_path.parent / f"{manifest_path.stem}_data"
    data_dir.mkdir(parents=True, exist_ok=True)

    files = []
    for m in range(dataset.members):
        row = []
        for t in range(dataset.timesteps):
            rel = f"{data_dir.name}/m{m:03d}_t{t:03d}.f32"
            dataset.data[m, t].astype("<f4").tofile(manifest_path.parent / rel)
            row.append(rel)
        files.append(row)

    manifest = {
        "name": dataset.name,
        "width": dataset.width,
        "height": dataset.height,
        "members": dataset.members,
        "timesteps": dataset.timesteps,
        "dtype": "f32le",
        "layout": "row-major",
        "files": files,
    }
    if dataset.normalized:
        manifest["normalized"] = True
        manifest["norm_min"] = dataset.norm_min
        manifest["norm_max"] = dataset.norm_max
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path


def generate_synthetic(spec: SyntheticSpec, seed: int) -> EnsembleDataset:
    """Deterministic synthetic ensemble; pure function of (spec, seed).

    All sinusoid parameters are drawn up front from one PCG64 stream seeded
    with ``seed``, then fields are evaluated per time step. Values pass
    through float32 once so the dataset survives disk round trips bit-exactly.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    w, h, m_count, t_count, modes = spec.width, spec.height, spec.members, spec.timesteps, spec.modes

    gx, gy = np.meshgrid(np.arange(w) / w, np.arange(h) / h)

    def sign(shape):
        return np.where(rng.random(shape) < 0.5, -1.0, 1.0)

    base_amp = rng.uniform(0.4, 1.0, modes)
    base_fx = rng.uniform(0.5, 3.0, modes) * sign(modes)
    base_fy = rng.uniform(0.5, 3.0, modes) * sign(modes)
    base_ph = rng.uniform(0.0, 2.0 * np.pi, modes)

    noise_amp = rng.uniform(0.3, 1.0, (m_count, modes))
    noise_fx = rng.uniform(0.5, 4.0, (m_count, modes)) * sign((m_count, modes))
    noise_fy = rng.uniform(0.5, 4.0, (m_count, modes)) * sign((m_count, modes))
    noise_ph = rng.uniform(0.0, 2.0 * np.pi, (m_count, modes))
    noise_om = rng.uniform(-0.5, 0.5, (m_count, modes))

    data = np.empty((m_count, t_count, h, w), dtype=np.float64)
    for t in range(t_count):
        base = np.zeros((h, w))
        for k in range(modes):
            base += base_amp[k] * np.sin(
                2.0 * np.pi * (base_fx[k] * gx + base_fy[k] * gy)
                + base_ph[k]
                + spec.drift * t
            )
        for m in range(m_count):
            field = base.copy()
            if spec.noise_scale > 0.0:
                noise = np.zeros((h, w))
                for k in range(modes):
                    noise += noise_amp[m, k] * np.sin(
                        2.0 * np.pi * (noise_fx[m, k] * gx + noise_fy[m, k] * gy)
                        + noise_ph[m, k]
                        + noise_om[m, k] * t
                    )
                field += spec.noise_scale * noise
            data[m, t] = field

    data = data.astype(np.float32).astype(np.float64)
    return EnsembleDataset(
        name=f"synthetic-{seed}",
        members=m_count,
        timesteps=t_count,
        width=w,
        height=h,
        data=data,
    )


def normalize_global(dataset: EnsembleDataset) -> EnsembleDataset:
    """Min-max normalize over all members, timesteps and grid points.

    One shared scale across the whole dataset (train and test alike) keeps
    fixed isovalues in [0, 1] meaningful everywhere.
    """
    if dataset.normalized:
        raise AlreadyNormalized(f"dataset {dataset.name!r} is already normalized")
    lo = float(dataset.data.min())
    hi = float(dataset.data.max())
    if hi == lo:
        raise DegenerateRange(f"constant dataset (min == max == {lo})")
    return replace(
        dataset,
        data=(dataset.data - lo) / (hi - lo),
        normalized=True,
        norm_min=lo,
        norm_max=hi,
    )


def split_time(dataset: EnsembleDataset, t_train: int) -> tuple[EnsembleDataset, EnsembleDataset]:
    """Split into (first t_train steps, remaining steps), sharing metadata."""
    if not 1 <= t_train < dataset.timesteps:
        raise OutOfRange(
            f"t_train must be in [1, {dataset.timesteps - 1}], got {t_train}"
        )
    train = replace(
        dataset,
        name=f"{dataset.name}/train",
        timesteps=t_train,
        data=dataset.data[:, :t_train].copy(),
    )
    test = replace(
        dataset,
        name=f"{dataset.name}/test",
        timesteps=dataset.timesteps - t_train,
        data=dataset.data[:, t_train:].copy(),
    )
    return train, test
