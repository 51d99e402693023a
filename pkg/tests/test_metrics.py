import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoeval.exceptions import RangeError, UndefinedAUCError
from geoeval.metrics import auc_pair_count, bin_abs_diff, rmse, rmse_diff, roc_auc, roc_curve


def test_auc_examples():
    assert roc_auc([1, 0], [0.9, 0.1]) == 1.0
    assert roc_auc([1, 0, 1, 0, 0], [0.3] * 5) == 0.5
    assert roc_auc([1, 1, 0, 0], [0.8, 0.4, 0.6, 0.2]) == 0.75


def test_auc_hand_pairs():
    # pairs (pos, neg): (.8,.6) (.8,.2) (.4,.6) (.4,.2) -> 3 concordant of 4
    pos, neg = [0.8, 0.4], [0.6, 0.2]
    concordant = sum(p > q for p in pos for q in neg)
    assert concordant / 4 == 0.75


def test_auc_single_label():
    with pytest.raises(UndefinedAUCError):
        roc_auc([1, 1, 1], [0.1, 0.2, 0.3])
    with pytest.raises(UndefinedAUCError):
        roc_curve([0, 0], [0.1, 0.2])


def test_auc_length_mismatch():
    with pytest.raises(ValueError):
        roc_auc([1, 0], [0.1])


def _labels_scores(draw_n=200):
    return st.integers(2, draw_n).flatmap(lambda n: st.tuples(
        st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda l: 0 < sum(l) < len(l)),
        st.lists(st.integers(0, 6).map(lambda v: v / 6), min_size=n, max_size=n)))


@settings(max_examples=300, deadline=None)
@given(_labels_scores())
def test_trapezoid_equals_pair_count(ls):
    labels, scores = ls
    assert roc_auc(labels, scores) == auc_pair_count(labels, scores)


@settings(max_examples=100, deadline=None)
@given(_labels_scores(60))
def test_auc_monotone_transform_invariance(ls):
    labels, scores = ls
    s = np.asarray(scores)
    assert roc_auc(labels, s) == roc_auc(labels, np.exp(3 * s) - 7)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 80), st.integers(0, 2 ** 32 - 1))
def test_auc_negation_sums_to_one(n, seed):
    rng = np.random.default_rng(seed)
    labels = np.r_[1, 0, rng.integers(0, 2, n - 2)]
    scores = rng.permutation(n).astype(float)  # distinct
    assert roc_auc(labels, scores) + roc_auc(labels, -scores) == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(_labels_scores(60))
def test_roc_curve_monotone(ls):
    c = roc_curve(*ls)
    assert c.points[0] == (0.0, 0.0) and c.points[-1] == (1.0, 1.0)
    assert (np.diff(c.fpr) >= 0).all() and (np.diff(c.tpr) >= 0).all()
    assert ((c.fpr >= 0) & (c.fpr <= 1) & (c.tpr >= 0) & (c.tpr <= 1)).all()
    assert np.trapezoid(c.tpr, c.fpr) == pytest.approx(roc_auc(*ls), abs=1e-12)


def test_rmse_examples():
    assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5))
    assert rmse([0, 0], [3, 4]) == pytest.approx(3.5355, abs=1e-4)
    t, p = np.array([1.0, -2, 5]), np.array([0.5, 1, 2])
    assert rmse(-3 * t, -3 * p) == pytest.approx(3 * rmse(t, p))


def test_rmse_errors():
    with pytest.raises(ValueError):
        rmse([], [])
    with pytest.raises(ValueError):
        rmse([1.0], [np.nan])
    with pytest.raises(ValueError):
        rmse([1.0, 2.0], [1.0])


@settings(max_examples=100)
@given(st.lists(st.integers(-10 ** 6, 10 ** 6).map(lambda v: v / 64), min_size=1, max_size=30), st.data())
def test_rmse_nonnegative_zero_iff_equal(t, data):
    vals = st.integers(-10 ** 6, 10 ** 6).map(lambda v: v / 64)
    p = data.draw(st.lists(vals, min_size=len(t), max_size=len(t)))
    r = rmse(t, p)
    assert r >= 0
    assert (r == 0) == (t == p)


def test_rmse_diff_sign():
    assert rmse_diff(5, 3) == 2
    assert rmse_diff(3, 5) == -2
    assert rmse_diff(4, 4) == 0


def _rec(d, v):
    return d, {"rdm": v, "blk": v, "sp": v}


def test_bin_abs_no_cancellation():
    out = bin_abs_diff([_rec(0.4, 1.0), _rec(0.7, -1.0)])
    assert len(out) == 1
    b = out[0]
    assert (b.bin_low, b.bin_high, b.count) == (0, 1, 2)
    assert b.mean_abs_rmse_diff == {"rdm": 1.0, "blk": 1.0, "sp": 1.0}


def test_bin_top_edge_closed():
    out = bin_abs_diff([_rec(100.0, 0.5)])
    assert (out[0].bin_low, out[0].bin_high) == (99, 100)


def test_bin_empty_and_range():
    assert bin_abs_diff([]) == []
    with pytest.raises(RangeError):
        bin_abs_diff([_rec(100.5, 0.0)])
    with pytest.raises(RangeError):
        bin_abs_diff([_rec(-0.1, 0.0)])


@settings(max_examples=100)
@given(st.lists(st.tuples(st.floats(0, 100), st.floats(-5, 5)), max_size=50))
def test_bin_invariants(recs):
    out = bin_abs_diff([_rec(d, v) for d, v in recs])
    assert sum(b.count for b in out) == len(recs)
    for b in out:
        assert b.bin_high - b.bin_low == 1 and b.count >= 1
        inside = [abs(v) for d, v in recs if b.bin_low <= d < b.bin_high or (b.bin_high == 100 and d == 100)]
        assert b.mean_abs_rmse_diff["rdm"] == pytest.approx(np.mean(inside))
