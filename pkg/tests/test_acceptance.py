"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line in the summary.

The sweep criteria (4 to 7 and 11) share one session fixture that runs the
``experiment`` command on the desk defaults twice, with 1 and with 8 threads.
"""

from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from conftest import record_criterion
from geoeval.cli import main
from geoeval.cv_methods import run_cv, split_block, split_random, split_spatial_plus, tile_ids
from geoeval.dav import DavConfig, normalize_auc, quantify_dissimilarity
from geoeval.experiment import DESK_SUBREGION_COUNTS, read_results_csv
from geoeval.forest import ForestConfig, predict, predict_proba, train_classifier, train_regressor
from geoeval.grid_data import PredictionSet, SampleSet, complement_predictions, extract_samples
from geoeval.metrics import CV_METHODS, auc_pair_count, roc_auc
from geoeval.variogram import EmpiricalVariogram, fit_variogram, model_curve

SWEEP_FILES = ("results.csv", "binned.csv", "scatter_rmse_diff.svg", "scatter_rmse.svg", "binned_abs_diff.svg")


def check(n, cond, detail):
    assert record_criterion(n, cond, detail), f"criterion {n} failed: {detail}"


@pytest.fixture(scope="session")
def sweep(tmp_path_factory):
    root = tmp_path_factory.mktemp("sweep")
    for threads in ("1", "8"):
        assert main(["experiment", "--out-dir", str(root / f"t{threads}"), "--threads", threads]) == 0
    return root, read_results_csv(root / "t1" / "results.csv")


def test_c01_normalize_exact():
    grid = [Fraction(0), Fraction(1, 4)] + [Fraction(10 + i, 20) for i in range(11)]
    bad = [float(a) for a in grid
           if normalize_auc(float(a)) != float(max(Fraction(0), (a - Fraction(1, 2)) / Fraction(1, 2) * 100))]
    anchors = (normalize_auc(0.5), normalize_auc(0.8), normalize_auc(1.0), normalize_auc(0.3))
    check(1, not bad and anchors == (0.0, 60.0, 100.0, 0.0),
          f"{len(grid)} sweep points exact, anchors 0.5/0.8/1.0/0.3 -> {anchors}")


def test_c02_auc_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, n)
        labels[:2] = (1, 0)
        scores = rng.integers(0, int(rng.integers(2, 30)), n) / 7.0  # coarse values force ties
        worst = max(worst, abs(roc_auc(labels, scores) - auc_pair_count(labels, scores)))
    check(2, worst <= 1e-12, f"max |trapezoid - pair count| over 1000 instances = {worst:.3g}")


def test_c03_dav_extremes(desk_grid):
    cfg_forest = ForestConfig(n_trees=100)
    valid = desk_grid.valid_flat_indices()
    x1 = desk_grid.covariates[valid, 0]
    low_cells, high_cells = valid[x1 <= np.quantile(x1, 0.2)], valid[x1 >= np.quantile(x1, 0.8)]
    same, disjoint = [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        s = extract_samples(desk_grid, desk_grid.locations_of(np.sort(rng.choice(valid, 300, replace=False))))
        same.append(quantify_dissimilarity(s, complement_predictions(desk_grid, s), DavConfig(cfg_forest, seed)).d)
        s = extract_samples(desk_grid, desk_grid.locations_of(np.sort(rng.choice(low_cells, 300, replace=False))))
        p = extract_samples(desk_grid, desk_grid.locations_of(high_cells))
        p = PredictionSet(p.locations, p.features, p.target, p.names)
        disjoint.append(quantify_dissimilarity(s, p, DavConfig(cfg_forest, seed)).d)
    check(3, np.mean(same) <= 15 and np.mean(disjoint) >= 95,
          f"mean d identical = {np.mean(same):.2f}%, disjoint x1 ranges = {np.mean(disjoint):.2f}%")


def test_c04_dissimilarity_gradient(sweep):
    _, recs = sweep
    n_sel = np.array([r.n_selected for r in recs])
    d = np.array([r.d for r in recs])
    rho = stats.spearmanr(n_sel, d).statistic
    d100, d1 = d[n_sel == 100].mean(), d[n_sel == 1].mean()
    ok = (len(recs) == len(DESK_SUBREGION_COUNTS) * 5 and rho <= -0.8 and d100 <= 15 and d1 >= 85
          and d.min() <= 15 and d.max() >= 85)
    check(4, ok, f"{len(recs)} tasks, spearman = {rho:.3f}, mean d at 100 = {d100:.2f}%, at 1 = {d1:.2f}%")


def test_c05_rdm_optimism(sweep):
    _, recs = sweep
    diffs = np.array([r.rmse_diff["rdm"] for r in recs if r.d >= 70])
    p = stats.binomtest(int((diffs > 0).sum()), len(diffs), 0.5, alternative="greater").pvalue if len(diffs) else 1.0
    check(5, len(diffs) > 0 and diffs.mean() > 0 and p < 0.05,
          f"{len(diffs)} tasks with d >= 70%, mean rdm diff = {diffs.mean():.3f}, "
          f"{int((diffs > 0).sum())} positive, sign test p = {p:.2g}")


def test_c06_sp_pessimism(sweep):
    _, recs = sweep
    diffs = np.array([r.rmse_diff["sp"] for r in recs if r.d <= 20])
    check(6, len(diffs) > 0 and diffs.mean() < 0,
          f"{len(diffs)} tasks with d <= 20%, mean sp diff = {diffs.mean():.3f}")


def test_c07_cv_error_ordering(sweep):
    _, recs = sweep
    cv = {m: np.array([r.rmse_cv[m] for r in recs]) for m in CV_METHODS}
    sp_blk = float(np.mean(cv["sp"] >= cv["blk"]))
    blk_rdm = float(np.mean(cv["blk"] >= cv["rdm"]))
    means = {m: float(cv[m].mean()) for m in CV_METHODS}
    ok = means["sp"] >= means["blk"] >= means["rdm"] and sp_blk >= 0.7 and blk_rdm >= 0.7
    check(7, ok, f"means sp/blk/rdm = {means['sp']:.3f}/{means['blk']:.3f}/{means['rdm']:.3f}, "
                 f"sp>=blk on {sp_blk:.0%}, blk>=rdm on {blk_rdm:.0%}")


def _random_samples(rng, n):
    extent = int(rng.integers(8, 80))
    flat = rng.choice(extent * extent, n, replace=False)
    locs = np.stack([flat // extent, flat % extent], axis=1)
    return SampleSet(locs, rng.normal(size=(n, 2)), rng.normal(size=n))


def test_c08_fold_invariants():
    rng = np.random.default_rng(8)
    calls = violations = 0
    for i in range(10_000):
        k = int(rng.integers(2, 8))
        n = int(rng.integers(k, 60))
        method = ("rdm", "blk", "rdm", "blk", "sp")[i % 5]
        seed = int(rng.integers(2 ** 62))
        if method == "rdm":
            fa = split_random(n, k, seed)
            violations += max(fa.sizes) - min(fa.sizes) > 1
        else:
            s = _random_samples(rng, n)
            if method == "blk":
                try:
                    fa = split_block(s, float(rng.uniform(1, 40)), k, seed)
                except Exception:  # too few occupied tiles even after halving
                    continue
                tiles = tile_ids(s.coords, fa.metadata["block_side"])
                pairs = np.unique(np.stack([tiles, fa.fold_of], 1), axis=0)
                violations += len(pairs) != len(np.unique(tiles))
            else:
                fa = split_spatial_plus(s, k, seed)
        calls += 1
        violations += not (len(fa.fold_of) == n and sorted(set(fa.fold_of.tolist())) == list(range(k)))
    check(8, violations == 0 and calls >= 9_000, f"{calls} splitter calls, {violations} violations")


def test_c09_out_of_fold(small_grid):
    rng = np.random.default_rng(9)
    flat = np.sort(rng.choice(small_grid.valid_flat_indices(), 100, replace=False))
    s = extract_samples(small_grid, small_grid.locations_of(flat))
    cfg = ForestConfig(n_trees=20, seed=3)
    folds = {"rdm": split_random(100, 5, 1), "blk": split_block(s, 12.0, 5, 1), "sp": split_spatial_plus(s, 5, 1)}
    changed = 0
    for m, fa in folds.items():
        base = run_cv(s, fa, cfg).predicted
        for i in range(100):
            t = s.target.copy()
            t[i] = 1e9
            p = run_cv(SampleSet(s.locations, s.features, t, s.names), fa, cfg).predicted
            changed += p[i] != base[i]
    check(9, changed == 0, f"300 poisoned targets (100 per method), own prediction changed {changed} times")


def test_c10_variogram_self_inversion():
    rng = np.random.default_rng(10)
    lags = 4.0 * (np.arange(15) + 0.5)
    worst = 0.0
    for family in ("exponential", "spherical"):
        for _ in range(20):
            nug, psill, eff = rng.uniform(0, 0.5), rng.uniform(0.5, 2.0), rng.uniform(8, 45)
            a = eff / 3 if family == "exponential" else eff
            emp = EmpiricalVariogram(lags, model_curve(family, lags, nug, psill, a), np.full(15, 100))
            worst = max(worst, abs(fit_variogram(emp, family).effective_range / eff - 1))
    check(10, worst <= 0.10, f"40 draws, worst relative effective-range error = {worst:.2e}")


def test_c11_determinism(sweep):
    root, _ = sweep
    same = [name for name in SWEEP_FILES
            if (root / "t1" / name).read_bytes() == (root / "t8" / name).read_bytes()]
    check(11, len(same) == len(SWEEP_FILES), f"{len(same)}/{len(SWEEP_FILES)} outputs byte-identical, threads 1 vs 8")


def test_c12_forest_sanity():
    rng = np.random.default_rng(12)
    X = rng.uniform(-1, 1, (600, 2))
    y = (X[:, 0] - 0.5 * X[:, 1] > 0).astype(float)
    clf = train_classifier(X[:300], y[:300], ForestConfig(n_trees=100, seed=1))
    auc = roc_auc(y[300:], predict_proba(clf, X[300:]))
    Xr, t = rng.normal(size=(200, 4)), rng.standard_cauchy(200)
    reg = train_regressor(Xr, t, ForestConfig(n_trees=100, seed=2))
    out = predict(reg, rng.normal(scale=10, size=(1000, 4)))
    inside = int(((out >= t.min()) & (out <= t.max())).sum())
    check(12, auc >= 0.99 and inside == 1000, f"classifier AUC = {auc:.4f}, {inside}/1000 regressor outputs in range")
