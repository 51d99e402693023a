import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoeval.cv_methods import (FoldAssignment, run_cv, split, split_block, split_random,
                                split_spatial_plus, tile_ids)
from geoeval.exceptions import FoldError, InsufficientDataError
from geoeval.forest import ForestConfig
from geoeval.grid_data import SampleSet

FAST = ForestConfig(n_trees=30, seed=2)


def _samples(locs, features=None, target=None):
    locs = np.asarray(locs, dtype=np.int64).reshape(-1, 2)
    n = len(locs)
    rng = np.random.default_rng(n)
    f = rng.normal(size=(n, 3)) if features is None else features
    t = rng.normal(size=n) if target is None else target
    return SampleSet(locs, f, t, tuple(f"c{i}" for i in range(np.shape(f)[1])))


def _random_samples(seed, n, extent=60):
    rng = np.random.default_rng(seed)
    flat = rng.choice(extent * extent, n, replace=False)
    return _samples(np.stack([flat // extent, flat % extent], axis=1))


def _assert_partition(fa, n):
    assert len(fa.fold_of) == n
    assert sum(fa.sizes) == n
    assert set(np.unique(fa.fold_of)) == set(range(fa.k))


def test_random_examples():
    fa = split_random(100, 5, seed=0)
    assert fa.sizes == [20] * 5
    assert sorted(split_random(7, 5, seed=1).sizes, reverse=True) == [2, 2, 1, 1, 1]
    assert np.array_equal(split_random(50, 5, 9).fold_of, split_random(50, 5, 9).fold_of)
    with pytest.raises(InsufficientDataError):
        split_random(3, 5)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 300), st.integers(1, 12), st.integers(0, 2 ** 32 - 1))
def test_random_sizes_property(n, k, seed):
    if n < k:
        with pytest.raises(InsufficientDataError):
            split_random(n, k, seed)
        return
    fa = split_random(n, k, seed)
    _assert_partition(fa, n)
    assert max(fa.sizes) - min(fa.sizes) <= 1


def test_block_corners():
    s = _samples([(0, 0), (0, 9), (9, 0), (9, 9)])
    fa = split_block(s, 5.0, 2, seed=3)
    assert len(np.unique(fa.block_of)) == 4
    assert sorted(np.bincount(fa.fold_of)) == [2, 2]
    assert fa.metadata["block_side"] == 5.0


def test_block_fallback_halves_side():
    s = _random_samples(0, 40, extent=20)
    fa = split_block(s, 100.0, 5, seed=0)
    assert fa.metadata["requested_block_side"] == 100.0
    assert fa.metadata["block_side"] < 100.0
    assert len(np.unique(fa.block_of)) >= 5
    _assert_partition(fa, 40)


def test_block_fallback_exhausted():
    s = _samples([(0, 0), (0, 1), (1, 0), (1, 1), (0, 2)])
    with pytest.raises(FoldError):
        split_block(s, 1000.0, 5, seed=0)


def test_block_colocated_share_fold():
    # distinct cells inside one tile stand in for co-located samples
    s = _samples([(0, 0), (0, 1), (1, 0), (20, 20), (40, 0), (0, 40), (40, 40)])
    fa = split_block(s, 10.0, 2, seed=5)
    assert len(set(fa.fold_of[:3])) == 1


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(5, 120), st.integers(2, 7), st.floats(1.0, 30.0))
def test_block_tile_invariant(seed, n, k, side):
    n = max(n, k)
    s = _random_samples(seed, n)
    try:
        fa = split_block(s, side, k, seed)
    except FoldError:
        return
    _assert_partition(fa, n)
    tiles = tile_ids(s.coords, fa.metadata["block_side"])
    for t in np.unique(tiles):
        assert len(np.unique(fa.fold_of[tiles == t])) == 1


def test_spatial_plus_n_equals_k():
    s = _random_samples(1, 5)
    fa = split_spatial_plus(s, 5, seed=0)
    assert sorted(fa.sizes) == [1] * 5
    assert len(np.unique(fa.block_of)) == 5


def test_spatial_plus_separated_clouds():
    rng = np.random.default_rng(7)
    a = rng.choice(100, 40, replace=False)
    b = rng.choice(100, 40, replace=False)
    locs = np.r_[np.stack([a // 10, a % 10], 1), np.stack([b // 10 + 80, b % 10 + 80], 1)]
    feats = np.r_[rng.normal(0, 0.1, (40, 3)), rng.normal(5, 0.1, (40, 3))]
    target = np.r_[rng.normal(0, 0.1, 40), rng.normal(5, 0.1, 40)]
    fa = split_spatial_plus(_samples(locs, feats, target), 2, seed=1)
    assert len(set(fa.fold_of[:40])) == 1 and len(set(fa.fold_of[40:])) == 1
    assert fa.fold_of[0] != fa.fold_of[40]


def test_spatial_plus_deterministic():
    s = _random_samples(2, 120)
    a, b = split_spatial_plus(s, 5, seed=4), split_spatial_plus(s, 5, seed=4)
    assert np.array_equal(a.fold_of, b.fold_of)
    assert a.metadata["n_blocks"] == 50


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(5, 80), st.integers(2, 5))
def test_spatial_plus_partition_and_blocks(seed, n, k):
    s = _random_samples(seed, n)
    fa = split_spatial_plus(s, k, seed)
    _assert_partition(fa, n)
    for blk in np.unique(fa.block_of):
        assert len(np.unique(fa.fold_of[fa.block_of == blk])) == 1


def test_fold_assignment_validation():
    with pytest.raises(FoldError):
        FoldAssignment(np.array([0, 0, 2]), 3, "rdm")
    with pytest.raises(FoldError):
        FoldAssignment(np.array([0, 1, 3]), 3, "rdm")


def test_fold_csv(tmp_path):
    s = _random_samples(3, 30)
    fa = split_block(s, 10.0, 3, seed=0)
    fa.write_csv(tmp_path / "f.csv")
    rows = list(csv.DictReader((tmp_path / "f.csv").open()))
    assert list(rows[0]) == ["sample_index", "fold", "block_id"]
    assert [int(r["fold"]) for r in rows] == fa.fold_of.tolist()
    split_random(30, 3, 0).write_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "sample_index,fold"


@pytest.mark.parametrize("method", ["rdm", "blk", "sp"])
def test_run_cv_constant_target(method):
    s = _samples(_random_samples(4, 40).locations, target=np.full(40, 1.5))
    fa = split(method, s, 5, seed=0, block_side=8.0)
    assert run_cv(s, fa, FAST).rmse_cv == 0.0


def test_run_cv_coverage():
    rng = np.random.default_rng(5)
    f = rng.normal(size=(10, 1))
    s = _samples(_random_samples(5, 10).locations, features=f, target=f[:, 0])
    res = run_cv(s, split_random(10, 5, 0), FAST)
    assert np.isfinite(res.predicted).all() and np.isfinite(res.rmse_cv)
    assert res.per_fold_sizes == [2] * 5
    assert res.rmse_cv == pytest.approx(np.sqrt(np.mean((res.predicted - s.target) ** 2)))


def test_run_cv_loo_and_single_fold_error():
    s = _random_samples(6, 8)
    res = run_cv(s, split_random(8, 8, 0), FAST)
    assert res.per_fold_sizes == [1] * 8
    with pytest.raises(FoldError):
        run_cv(s, split_random(8, 1, 0), FAST)


@pytest.mark.parametrize("method", ["rdm", "blk", "sp"])
def test_out_of_fold_poisoning(method):
    s = _random_samples(8, 100)
    fa = split(method, s, 5, seed=1, block_side=12.0)
    base = run_cv(s, fa, FAST).predicted
    for i in np.random.default_rng(0).choice(100, 10, replace=False):
        t = s.target.copy()
        t[i] = 1e6
        poisoned = run_cv(_samples(s.locations, s.features, t), fa, FAST).predicted
        assert poisoned[i] == base[i]
        assert not np.array_equal(poisoned, base)


def test_split_dispatch_errors():
    s = _random_samples(9, 20)
    with pytest.raises(ValueError):
        split("blk", s, 5)
    with pytest.raises(ValueError, match="rdm, blk, sp"):
        split("loo", s, 5)
