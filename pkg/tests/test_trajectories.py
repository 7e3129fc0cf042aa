import json

import numpy as np
import pytest

from oracles import rank_correlation, space_time_correlation
from pvtraj.marginals import DEFAULT_LEVELS, PredictiveCdf
from pvtraj.time_grid import build_map
from pvtraj.trajectories import (
    DEFAULT_METHODS,
    TrajectorySet,
    generate_independent,
    generate_independent_gaussian,
    generate_mvn,
    generate_naive,
    parse_method,
    point_forecast,
    read_trajectories,
    to_hourly,
    write_trajectories,
)

HOURS = np.arange(6, 20)


def cdfs_for(D, rng):
    return [PredictiveCdf.from_quantiles(DEFAULT_LEVELS, np.sort(rng.beta(2, 3, 99)))
            for _ in range(D)]


def day_map(n_lit=11, G=15, zone=1):
    v = np.zeros(14)
    v[1:1 + n_lit] = 0.5
    return build_map(v, G, HOURS, zone_id=zone)


def test_method_names():
    assert parse_method("mvn_recursive") == ("mvn_recursive", None)
    assert parse_method("independent_gaussian_5") == ("independent_gaussian", 5.0)
    assert "independent_gaussian_10" in DEFAULT_METHODS
    with pytest.raises(ValueError):
        parse_method("gaussian")


def test_mvn_identity_gives_uniform_independent_ranks():
    rng = np.random.default_rng(0)
    cdfs = cdfs_for(6, rng)
    t = generate_mvn(cdfs, np.eye(6), 3000, seed=1)
    u = np.stack([c.evaluate(t.paths[:, d]) for d, c in enumerate(cdfs)], axis=1)
    hist = np.stack([np.histogram(u[:, d], 20, (0, 1))[0] / 3000 for d in range(6)])
    assert np.max(np.abs(hist - 0.05)) < 0.02
    off = rank_correlation(t.paths)[~np.eye(6, dtype=bool)]
    assert np.max(np.abs(off)) < 0.05


def test_mvn_comonotone():
    rng = np.random.default_rng(1)
    cdfs = cdfs_for(5, rng)
    t = generate_mvn(cdfs, np.ones((5, 5)), 200, seed=2)
    u = np.stack([c.evaluate(t.paths[:, d]) for d, c in enumerate(cdfs)], axis=1)
    np.testing.assert_allclose(u, np.repeat(u[:, :1], 5, axis=1), atol=1e-8)


def test_mvn_reproduces_rank_correlation():
    rng = np.random.default_rng(2)
    R = space_time_correlation(2, 5, 0.6, 0.8)
    cdfs = cdfs_for(10, rng)
    t = generate_mvn(cdfs, R, 3000, seed=3)
    # Spearman correlation of a Gaussian copula
    expected = 6 / np.pi * np.arcsin(R / 2)
    assert np.max(np.abs(rank_correlation(t.paths) - expected)) < 0.05


def test_mvn_deterministic_for_seed():
    rng = np.random.default_rng(3)
    cdfs = cdfs_for(4, rng)
    a = generate_mvn(cdfs, np.eye(4), 10, seed=7).paths
    b = generate_mvn(cdfs, np.eye(4), 10, seed=7).paths
    np.testing.assert_array_equal(a, b)


def test_mvn_dimension_mismatch():
    with pytest.raises(ValueError):
        generate_mvn(cdfs_for(3, np.random.default_rng(0)), np.eye(4), 5, seed=0)


def test_naive_single_day_history():
    hist = np.random.default_rng(4).uniform(size=(1, 15))
    t = generate_naive(hist, 30, seed=0)
    np.testing.assert_array_equal(t.paths, np.repeat(hist, 30, axis=0))


def test_naive_resamples_history_uniformly():
    hist = np.linspace(0, 1, 5)[:, None] * np.ones((5, 3))
    t = generate_naive(hist, 50_000, seed=1)
    counts = np.bincount(t.meta["picked"], minlength=5) / 50_000
    np.testing.assert_allclose(counts, 0.2, atol=0.01)
    a = generate_naive(hist, 20, seed=9).meta["picked"]
    assert a == generate_naive(hist, 20, seed=9).meta["picked"]


def test_naive_needs_history():
    with pytest.raises(ValueError):
        generate_naive(np.zeros((0, 3)), 4, seed=0)


def test_independent_degenerate_and_uniform():
    c = PredictiveCdf.from_quantiles(DEFAULT_LEVELS, np.full(99, 0.3), 0.3, 0.3)
    t = generate_independent([c, c], 100, seed=0)
    assert np.all(t.paths == 0.3)
    rng = np.random.default_rng(5)
    cdfs = cdfs_for(4, rng)
    t = generate_independent(cdfs, 3000, seed=1)
    u = np.stack([c.evaluate(t.paths[:, d]) for d, c in enumerate(cdfs)], axis=1)
    for d in range(4):
        assert np.max(np.abs(np.histogram(u[:, d], 20, (0, 1))[0] / 3000 - 0.05)) < 0.02
    off = np.corrcoef(u, rowvar=False)[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off)) < 0.05


def test_independent_gaussian():
    t = generate_independent_gaussian(np.zeros(3), 10, 50, seed=0)
    assert np.all(t.paths == 0)
    t = generate_independent_gaussian(np.array([0.5]), 10, 10_000, seed=1)
    assert abs(t.paths.mean() - 0.5) < 0.005
    assert t.method == "independent_gaussian_10"
    t = generate_independent_gaussian(np.array([0.99]), 10, 1000, seed=1)
    assert t.paths.max() <= 1.0
    with pytest.raises(ValueError):
        generate_independent_gaussian(np.ones(2), 0, 5)


def test_point_forecast_is_median():
    rng = np.random.default_rng(6)
    cdfs = cdfs_for(5, rng)
    np.testing.assert_allclose(point_forecast(cdfs), [c.quantiles[49] for c in cdfs])


def test_trajectory_set_validation():
    with pytest.raises(ValueError):
        TrajectorySet(1, "x", 2, np.full((2, 3), 1.5))
    with pytest.raises(ValueError):
        TrajectorySet(1, "x", 3, np.zeros((2, 3)))


def test_to_hourly_identity_and_constant():
    hours = np.arange(5, 21)
    v = np.zeros(16)
    v[:15] = 0.5
    m = build_map(v, 15, hours)
    paths = np.random.default_rng(7).uniform(size=(4, 15))
    hourly = to_hourly(TrajectorySet(1, "x", 4, paths, (m,)))
    np.testing.assert_array_equal(hourly[:, 0, :15], paths)
    const = to_hourly(TrajectorySet(1, "x", 2, np.full((2, 15), 0.4), (day_map(),)))
    assert np.all(const[:, 0, 1:12] == 0.4) and const[:, 0, 0].max() == 0


def test_to_hourly_stays_in_unit_interval():
    rng = np.random.default_rng(8)
    maps = (day_map(9, zone=1), day_map(12, zone=2))
    t = TrajectorySet(1, "x", 50, rng.uniform(size=(50, 30)), maps)
    h = to_hourly(t)
    assert h.shape == (50, 2, 14)
    assert h.min() >= 0 and h.max() <= 1


def test_trajectory_file_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    maps = (day_map(zone=1), day_map(zone=2))
    t = TrajectorySet(3, "mvn_recursive", 5, rng.uniform(size=(5, 30)), maps,
                      seed=np.random.SeedSequence(4))
    sidecar = write_trajectories(t, tmp_path / "t.csv")
    zones, hours, vals = read_trajectories(tmp_path / "t.csv")
    assert list(zones) == [1, 2] and list(hours) == list(HOURS)
    np.testing.assert_array_equal(vals, to_hourly(t))
    meta = json.loads(sidecar.read_text())
    assert meta["S"] == 5 and len(meta["grid_maps"]) == 2
