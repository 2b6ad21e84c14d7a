"""Cell statistics against brute-force oracles, and sample packing."""

import numpy as np
import pytest

from lcptools import (
    CellGaussian,
    EnsembleDataset,
    McConfig,
    SyntheticSpec,
    build_training_set,
    cell_statistics,
    field_statistics,
    generate_synthetic,
    load_training_set,
    make_training_sample,
    normalize_global,
    save_training_set,
)
from lcptools.errors import MissingFile, OutOfRange, OutOfRangeLcp, SizeMismatch, TooFewMembers

PACK_PAIRS = ((0, 0), (1, 1), (2, 2), (3, 3),
              (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def brute_force_moments(samples):
    """Independent oracle: plain-Python mean and pairwise covariance sums."""
    samples = np.asarray(samples, dtype=np.float64)
    m = samples.shape[0]
    mu = [sum(samples[:, i]) / m for i in range(4)]
    cov = []
    for i, j in PACK_PAIRS:
        acc = 0.0
        for k in range(m):
            acc += (samples[k, i] - mu[i]) * (samples[k, j] - mu[j])
        cov.append(acc / (m - 1))
    return np.array(mu), np.array(cov)


def dataset_from_vertex_samples(per_member_vertices):
    """2x2-grid dataset whose single cell has the given (M, 4) vertex values."""
    vertices = np.asarray(per_member_vertices, dtype=np.float64)
    m = vertices.shape[0]
    data = np.empty((m, 1, 2, 2))
    # vertex order: Y0=(0,0), Y1=(1,0), Y2=(1,1), Y3=(0,1)
    data[:, 0, 0, 0] = vertices[:, 0]
    data[:, 0, 0, 1] = vertices[:, 1]
    data[:, 0, 1, 1] = vertices[:, 2]
    data[:, 0, 1, 0] = vertices[:, 3]
    return EnsembleDataset(name="cell", members=m, timesteps=1, width=2, height=2, data=data)


def test_two_member_hand_example():
    ds = dataset_from_vertex_samples([[0, 1, 2, 3], [2, 3, 4, 5]])
    cell = cell_statistics(ds, 0, 0, 0)
    assert np.array_equal(cell.mu, [1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(cell.cov, np.full(10, 2.0))
    mu_oracle, cov_oracle = brute_force_moments([[0, 1, 2, 3], [2, 3, 4, 5]])
    assert np.allclose(cell.mu, mu_oracle, rtol=0, atol=0)
    assert np.allclose(cell.cov, cov_oracle, rtol=0, atol=0)


def test_identical_members_zero_covariance():
    ds = dataset_from_vertex_samples([[0.3, 0.4, 0.5, 0.6]] * 4)
    cell = cell_statistics(ds, 0, 0, 0)
    assert np.array_equal(cell.mu, [0.3, 0.4, 0.5, 0.6])
    assert np.array_equal(cell.cov, np.zeros(10))


def test_three_member_vertex_stats():
    # vertex 0 samples [1,2,3], vertex 1 samples [2,2,2]
    ds = dataset_from_vertex_samples([[1, 2, 0, 0], [2, 2, 0, 0], [3, 2, 0, 0]])
    cell = cell_statistics(ds, 0, 0, 0)
    assert cell.cov[0] == 1.0  # var of vertex 0
    assert cell.cov[1] == 0.0  # var of vertex 1
    assert cell.cov[4] == 0.0  # cov(0, 1)
    mu_oracle, cov_oracle = brute_force_moments([[1, 2, 0, 0], [2, 2, 0, 0], [3, 2, 0, 0]])
    assert np.allclose(cell.mu, mu_oracle)
    assert np.allclose(cell.cov, cov_oracle)


def test_random_cells_match_brute_force():
    rng = np.random.default_rng(8)
    for _ in range(20):
        m = int(rng.integers(2, 12))
        vertices = rng.normal(0, 1, (m, 4))
        cell = cell_statistics(dataset_from_vertex_samples(vertices), 0, 0, 0)
        mu_oracle, cov_oracle = brute_force_moments(vertices)
        assert np.allclose(cell.mu, mu_oracle, rtol=1e-12, atol=1e-12)
        assert np.allclose(cell.cov, cov_oracle, rtol=1e-12, atol=1e-12)


def test_field_statistics_dimensions():
    spec = SyntheticSpec(width=3, height=3, members=3, timesteps=1, modes=2)
    ds = normalize_global(generate_synthetic(spec, 4))
    stats = field_statistics(ds, 0)
    assert (stats.cells_w, stats.cells_h) == (2, 2)
    assert len(stats) == 4


def test_field_statistics_wind_scale_cell_count():
    spec = SyntheticSpec(width=240, height=121, members=2, timesteps=1, modes=2)
    ds = normalize_global(generate_synthetic(spec, 4))
    stats = field_statistics(ds, 0)
    assert (stats.cells_w, stats.cells_h) == (239, 120)
    assert len(stats) == 28_680


def test_field_statistics_equals_cellwise_bitexact(dataset_small):
    stats = field_statistics(dataset_small, 1)
    for cy in range(stats.cells_h):
        for cx in range(stats.cells_w):
            idx = cy * stats.cells_w + cx
            cell = cell_statistics(dataset_small, 1, cx, cy)
            assert np.array_equal(stats.mu[idx], cell.mu)
            assert np.array_equal(stats.cov[idx], cell.cov)


def test_stats_bounds_and_members():
    spec = SyntheticSpec(width=4, height=4, members=2, timesteps=1, modes=2)
    ds = normalize_global(generate_synthetic(spec, 4))
    with pytest.raises(OutOfRange):
        cell_statistics(ds, 0, 3, 0)
    with pytest.raises(OutOfRange):
        cell_statistics(ds, 1, 0, 0)

    class OneMember:
        members = 1
        normalized = True
        timesteps = 1
        width = 4
        height = 4

    with pytest.raises(TooFewMembers):
        cell_statistics(OneMember(), 0, 0, 0)


def test_training_sample_layout():
    cell = CellGaussian(np.array([1.0, 2.0, 3.0, 4.0]), np.full(10, 2.0))
    sample = make_training_sample(cell, 0.5, 0.25)
    assert sample.dtype == np.float32
    assert np.array_equal(
        sample, np.float32([1, 2, 3, 4, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 0.5, 0.25])
    )


def test_training_sample_zero_and_range():
    zero = CellGaussian(np.zeros(4), np.zeros(10))
    assert np.array_equal(make_training_sample(zero, 0.0, 0.0), np.zeros(16, np.float32))
    with pytest.raises(OutOfRangeLcp):
        make_training_sample(zero, 0.5, 1.5)
    with pytest.raises(OutOfRangeLcp):
        make_training_sample(zero, 0.5, -0.1)


def test_build_training_set_cardinality_and_determinism():
    spec = SyntheticSpec(width=3, height=3, members=4, timesteps=2, modes=2)
    ds = normalize_global(generate_synthetic(spec, 6))
    isovalues = [round(0.1 * k, 1) for k in range(1, 10)]
    cfg = McConfig(r=64, seed=5)
    samples = build_training_set(ds, [0, 1], isovalues, cfg)
    assert samples.shape == (4 * 2 * 9, 16)
    again = build_training_set(ds, [0, 1], isovalues, cfg)
    assert np.array_equal(samples, again)
    # labels are probabilities
    assert samples[:, 15].min() >= 0.0 and samples[:, 15].max() <= 1.0


def test_build_training_set_drop_zero_lcp():
    spec = SyntheticSpec(width=9, height=9, members=4, timesteps=1, modes=2)
    ds = normalize_global(generate_synthetic(spec, 6))
    cfg = McConfig(r=64, seed=5)
    full = build_training_set(ds, [0], [0.5], cfg)
    filtered = build_training_set(ds, [0], [0.5], cfg, drop_zero_lcp=True)
    assert filtered.shape[0] == int((full[:, 15] > 0).sum())
    assert filtered.shape[0] < full.shape[0]  # far-from-level cells exist
    assert (filtered[:, 15] > 0).all()


def test_covariance_symmetry_structural():
    rng = np.random.default_rng(1)
    cell = cell_statistics(dataset_from_vertex_samples(rng.normal(0, 1, (6, 4))), 0, 0, 0)
    full = cell.matrix()
    assert np.array_equal(full, full.T)


def test_cauchy_schwarz_within_slack():
    rng = np.random.default_rng(2)
    for _ in range(50):
        m = int(rng.integers(2, 9))
        cell = cell_statistics(dataset_from_vertex_samples(rng.normal(0, 2, (m, 4))), 0, 0, 0)
        var = cell.cov[:4]
        for idx, (i, j) in enumerate(PACK_PAIRS[4:]):
            assert abs(cell.cov[4 + idx]) <= np.sqrt(var[i] * var[j]) + 1e-9


def test_scaling_property():
    rng = np.random.default_rng(3)
    for a in (0.1, 0.37, 0.9):
        vertices = rng.uniform(0.2, 0.8, (5, 4))
        base = cell_statistics(dataset_from_vertex_samples(vertices), 0, 0, 0)
        scaled = cell_statistics(dataset_from_vertex_samples(a * vertices), 0, 0, 0)
        assert np.allclose(scaled.mu, a * base.mu, rtol=1e-12)
        assert np.allclose(scaled.cov, a * a * base.cov, rtol=1e-12)


def test_two_member_covariance_rank_one():
    rng = np.random.default_rng(4)
    for _ in range(20):
        cell = cell_statistics(dataset_from_vertex_samples(rng.normal(0, 1, (2, 4))), 0, 0, 0)
        eigs = np.sort(np.linalg.eigvalsh(cell.matrix()))[::-1]
        assert eigs[1] <= 1e-9 * max(eigs[0], 1e-300)


def test_training_set_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    samples = rng.uniform(0, 1, (37, 16)).astype(np.float32)
    path = tmp_path / "train.bin"
    save_training_set(samples, path, isovalues=[0.1, 0.5], source="src.json", mc_seed=9, r=64)
    back, sidecar = load_training_set(path)
    assert np.array_equal(back, samples)
    assert sidecar["count"] == 37
    assert sidecar["isovalues"] == [0.1, 0.5]
    assert sidecar["source_manifest"] == "src.json"
    assert sidecar["mc_seed"] == 9 and sidecar["r"] == 64


def test_training_set_corruption(tmp_path):
    rng = np.random.default_rng(5)
    samples = rng.uniform(0, 1, (10, 16)).astype(np.float32)
    path = tmp_path / "train.bin"
    save_training_set(samples, path, isovalues=[0.5], source="s", mc_seed=1, r=8)

    with open(path, "ab") as fh:
        fh.write(b"\x00\x00\x00\x00")  # no longer a multiple of 16 floats
    with pytest.raises(SizeMismatch):
        load_training_set(path)

    save_training_set(samples, path, isovalues=[0.5], source="s", mc_seed=1, r=8)
    (tmp_path / "train.bin.json").unlink()
    with pytest.raises(MissingFile):
        load_training_set(path)
