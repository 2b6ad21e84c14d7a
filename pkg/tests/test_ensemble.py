"""Dataset loading, synthetic generation, normalization and time splits."""

import json

import numpy as np
import pytest

from lcptools import (
    EnsembleDataset,
    SyntheticSpec,
    field_statistics,
    generate_synthetic,
    load_dataset,
    normalize_global,
    save_dataset,
    split_time,
)
from lcptools.errors import (
    AlreadyNormalized,
    DegenerateRange,
    InvalidSpec,
    MalformedManifest,
    MissingFile,
    NonFiniteValue,
    OutOfRange,
    SizeMismatch,
)


def write_raw(path, values):
    np.asarray(values, dtype="<f4").tofile(path)


def write_manifest(tmp_path, *, width, height, members, timesteps, grids, **overrides):
    """Build raw files + manifest; grids[m][t] is a flat list of floats."""
    files = []
    for m in range(members):
        row = []
        for t in range(timesteps):
            rel = f"m{m}_t{t}.f32"
            write_raw(tmp_path / rel, grids[m][t])
            row.append(rel)
        files.append(row)
    manifest = {
        "name": "test",
        "width": width,
        "height": height,
        "members": members,
        "timesteps": timesteps,
        "dtype": "f32le",
        "layout": "row-major",
        "files": files,
    }
    manifest.update(overrides)
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path


def test_load_two_member_roundtrip(tmp_path):
    g0 = list(range(9))
    g1 = [v + 0.5 for v in range(9)]
    path = write_manifest(tmp_path, width=3, height=3, members=2, timesteps=1,
                          grids=[[g0], [g1]])
    ds = load_dataset(path)
    assert ds.members == 2 and ds.timesteps == 1
    assert ds.width == 3 and ds.height == 3
    assert not ds.normalized
    assert np.array_equal(ds.data[0, 0].reshape(-1), np.float32(g0).astype(np.float64))
    assert np.array_equal(ds.data[1, 0].reshape(-1), np.float32(g1).astype(np.float64))


def test_load_size_mismatch(tmp_path):
    path = write_manifest(tmp_path, width=4, height=4, members=2, timesteps=1,
                          grids=[[list(range(15))], [list(range(16))]])
    with pytest.raises(SizeMismatch):
        load_dataset(path)


def test_load_non_finite(tmp_path):
    grid = list(range(9))
    grid[4] = float("nan")
    path = write_manifest(tmp_path, width=3, height=3, members=2, timesteps=1,
                          grids=[[grid], [list(range(9))]])
    with pytest.raises(NonFiniteValue):
        load_dataset(path)


def test_load_missing_files(tmp_path):
    with pytest.raises(MissingFile):
        load_dataset(tmp_path / "nowhere.json")

    path = write_manifest(tmp_path, width=3, height=3, members=2, timesteps=1,
                          grids=[[list(range(9))], [list(range(9))]])
    (tmp_path / "m1_t0.f32").unlink()
    with pytest.raises(MissingFile):
        load_dataset(path)


def test_load_malformed_manifest(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(MalformedManifest):
        load_dataset(bad)

    path = write_manifest(tmp_path, width=3, height=3, members=2, timesteps=1,
                          grids=[[list(range(9))], [list(range(9))]])
    manifest = json.loads(path.read_text())
    del manifest["dtype"]
    path.write_text(json.dumps(manifest))
    with pytest.raises(MalformedManifest):
        load_dataset(path)

    manifest["dtype"] = "f64be"
    path.write_text(json.dumps(manifest))
    with pytest.raises(MalformedManifest):
        load_dataset(path)

    manifest["dtype"] = "f32le"
    manifest["files"] = manifest["files"][:1]  # one member missing
    path.write_text(json.dumps(manifest))
    with pytest.raises(MalformedManifest):
        load_dataset(path)


def test_generate_is_pure_function_of_spec_and_seed():
    spec = SyntheticSpec(width=9, height=7, members=4, timesteps=3)
    a = generate_synthetic(spec, 123)
    b = generate_synthetic(spec, 123)
    c = generate_synthetic(spec, 124)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_generate_zero_noise_members_identical():
    spec = SyntheticSpec(width=9, height=9, members=5, timesteps=2, noise_scale=0.0)
    ds = generate_synthetic(spec, 3)
    for t in range(ds.timesteps):
        for m in range(1, ds.members):
            assert np.array_equal(ds.data[m, t], ds.data[0, t])


def test_generate_nontrivial_covariance():
    # noisy members must make nearly every cell's Gaussian non-degenerate
    spec = SyntheticSpec(width=21, height=21, members=10, timesteps=1, noise_scale=0.3)
    ds = normalize_global(generate_synthetic(spec, 5))
    stats = field_statistics(ds, 0)
    traces = stats.cov[:, :4].sum(axis=1)
    assert (traces > 0).mean() >= 0.99


def test_generate_invalid_spec():
    with pytest.raises(InvalidSpec):
        generate_synthetic(SyntheticSpec(width=0, height=9, members=4, timesteps=1), 0)
    with pytest.raises(InvalidSpec):
        generate_synthetic(SyntheticSpec(width=9, height=9, members=1, timesteps=1), 0)
    with pytest.raises(InvalidSpec):
        generate_synthetic(
            SyntheticSpec(width=9, height=9, members=4, timesteps=1, noise_scale=-1.0), 0
        )


def _dataset_from_values(values):
    arr = np.asarray(values, dtype=np.float64)
    return EnsembleDataset(
        name="direct",
        members=arr.shape[0],
        timesteps=arr.shape[1],
        width=arr.shape[3],
        height=arr.shape[2],
        data=arr,
    )


def test_normalize_affine_map():
    # global min -3, max 7: the value 2 must land exactly at 0.5
    data = np.full((2, 1, 2, 2), 1.0)
    data[0, 0, 0, 0] = -3.0
    data[1, 0, 1, 1] = 7.0
    data[0, 0, 1, 0] = 2.0
    ds = normalize_global(_dataset_from_values(data))
    assert ds.normalized
    assert ds.norm_min == -3.0 and ds.norm_max == 7.0
    assert ds.data[0, 0, 1, 0] == 0.5
    assert ds.data[0, 0, 0, 0] == 0.0
    assert ds.data[1, 0, 1, 1] == 1.0


def test_normalize_identity_when_already_unit_range():
    data = np.array([[[[0.0, 0.25], [0.75, 1.0]]], [[[0.1, 0.2], [0.3, 0.4]]]])
    ds = normalize_global(_dataset_from_values(data))
    assert np.array_equal(ds.data, data)
    assert ds.norm_min == 0.0 and ds.norm_max == 1.0


def test_normalize_degenerate_and_twice():
    with pytest.raises(DegenerateRange):
        normalize_global(_dataset_from_values(np.full((2, 1, 2, 2), 3.5)))

    ds = normalize_global(_dataset_from_values(np.arange(8, dtype=float).reshape(2, 1, 2, 2)))
    with pytest.raises(AlreadyNormalized):
        normalize_global(ds)


def test_normalize_denormalize_recovers_originals():
    rng = np.random.default_rng(0)
    original = rng.normal(2.0, 5.0, (3, 2, 4, 5))
    ds = normalize_global(_dataset_from_values(original))
    recovered = ds.data * (ds.norm_max - ds.norm_min) + ds.norm_min
    assert np.allclose(recovered, original, rtol=1e-6, atol=1e-12)


def test_split_paper_protocol_45_17():
    spec = SyntheticSpec(width=4, height=4, members=2, timesteps=45, modes=2)
    ds = generate_synthetic(spec, 1)
    train, test = split_time(ds, 17)
    assert train.timesteps == 17 and test.timesteps == 28
    assert np.array_equal(train.data, ds.data[:, :17])
    assert np.array_equal(test.data, ds.data[:, 17:])
    assert train.normalized == ds.normalized


def test_split_bounds():
    spec = SyntheticSpec(width=4, height=4, members=2, timesteps=5, modes=2)
    ds = generate_synthetic(spec, 1)
    with pytest.raises(OutOfRange):
        split_time(ds, 5)
    with pytest.raises(OutOfRange):
        split_time(ds, 0)


def test_split_minimal():
    spec = SyntheticSpec(width=4, height=4, members=2, timesteps=2, modes=2)
    ds = generate_synthetic(spec, 1)
    train, test = split_time(ds, 1)
    assert train.timesteps == 1 and test.timesteps == 1
    assert np.array_equal(train.data[:, 0], ds.data[:, 0])
    assert np.array_equal(test.data[:, 0], ds.data[:, 1])


def test_split_shares_normalization_metadata():
    spec = SyntheticSpec(width=4, height=4, members=2, timesteps=3, modes=2)
    ds = normalize_global(generate_synthetic(spec, 1))
    train, test = split_time(ds, 2)
    for part in (train, test):
        assert part.normalized
        assert part.norm_min == ds.norm_min and part.norm_max == ds.norm_max


def test_save_load_bitexact_roundtrip(tmp_path):
    spec = SyntheticSpec(width=6, height=5, members=3, timesteps=2)
    ds = generate_synthetic(spec, 9)
    save_dataset(ds, tmp_path / "ds.json")
    back = load_dataset(tmp_path / "ds.json")
    assert np.array_equal(back.data, ds.data)
    assert (back.members, back.timesteps, back.width, back.height) == (3, 2, 6, 5)
    assert not back.normalized


def test_save_load_preserves_normalization_flag(tmp_path):
    spec = SyntheticSpec(width=6, height=5, members=3, timesteps=2)
    ds = normalize_global(generate_synthetic(spec, 9))
    save_dataset(ds, tmp_path / "norm.json")
    back = load_dataset(tmp_path / "norm.json")
    assert back.normalized
    assert back.norm_min == ds.norm_min and back.norm_max == ds.norm_max
    # values were already float32-quantized in [0,1]; round trip is exact on them
    assert np.array_equal(back.data, ds.data.astype(np.float32).astype(np.float64))


def test_field_accessor():
    spec = SyntheticSpec(width=5, height=4, members=2, timesteps=2, modes=2)
    ds = generate_synthetic(spec, 2)
    f = ds.field(1, 1)
    assert f.width == 5 and f.height == 4
    assert np.array_equal(f.values, ds.data[1, 1])
    with pytest.raises(OutOfRange):
        ds.field(2, 0)
