import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scratchsense import oracles
from scratchsense import stats_eval as se
from scratchsense.labels_gt import BoutList, Bout, extract_bouts, filter_bouts
from scratchsense.pipeline.selftest import random_rmcorr_data, random_scores


# -- STH / SBH ---------------------------------------------------------------

def test_sth_sbh_examples():
    mask = np.zeros(8 * 3600 * 15, bool)
    mask[: 24 * 60 * 15] = True
    assert se.sth(mask, 8.0) == pytest.approx(3.0, abs=1e-12)
    assert se.sth(np.zeros(10, bool), 1.0) == 0.0
    bouts = BoutList([Bout(10 * i, 10 * i + 5) for i in range(16)])
    assert se.sbh(bouts, 8.0) == 2.0
    assert se.sbh(BoutList(), 8.0) == 0.0
    with pytest.raises(ValueError):
        se.sth(mask, 0.0)
    with pytest.raises(ValueError):
        se.sbh(bouts, -1.0)


def test_sth_matches_tick_count(rng):
    for _ in range(50):
        labels = rng.integers(0, 3, 3000)
        hours = float(rng.uniform(0.1, 10))
        assert se.sth(labels, hours) == int(np.sum(labels == 1)) / 15 / 60 / hours


def test_sbh_after_filter_matches_manual(rng):
    labels = rng.choice([0, 1], size=5000, p=[0.9, 0.1])
    labels[100:160] = 1
    bouts = extract_bouts(labels)
    manual = sum(1 for b in bouts if b.end - b.start >= 45)
    assert se.sbh(filter_bouts(bouts, 3.0), 2.0) == manual / 2.0


def test_sth_ignores_bout_order():
    a = [Bout(0, 5), Bout(10, 40)]
    assert se.sth(BoutList(a), 1.0) == se.sth(BoutList(a).rasterize(50), 1.0)


# -- ROC / PR ----------------------------------------------------------------

def test_roc_examples():
    assert se.roc_points_and_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]).auc == 1.0
    assert se.roc_points_and_auc([0.5] * 6, [0, 1, 0, 1, 1, 0]).auc == 0.5
    with pytest.raises(ValueError):
        se.roc_points_and_auc([0.1, 0.2], [1, 1])


def test_auc_equals_mann_whitney(rng):
    for _ in range(300):
        s, y = random_scores(rng)
        assert abs(se.roc_points_and_auc(s, y).auc - oracles.mann_whitney_auc(s, y)) <= 1e-12


def test_pr_examples():
    assert se.pr_points_and_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]).auc == 1.0
    labels = np.array([0, 1, 0, 1, 1, 0, 0, 0])
    assert se.pr_points_and_auc(np.full(8, 0.3), labels).auc == pytest.approx(labels.mean(), abs=1e-15)
    with pytest.raises(ValueError):
        se.pr_points_and_auc([0.1, 0.2], [0, 0])


def test_ap_matches_enumeration(rng):
    for _ in range(200):
        s, y = random_scores(rng)
        assert abs(se.pr_points_and_auc(s, y).auc - oracles.average_precision(s, y)) <= 1e-12


def test_roc_curve_is_monotone(rng):
    s, y = random_scores(rng)
    c = se.roc_points_and_auc(s, y)
    assert c.x[0] == 0 and c.y[0] == 0 and c.x[-1] == 1 and c.y[-1] == 1
    assert np.all(np.diff(c.x) >= 0) and np.all(np.diff(c.y) >= 0)


# -- confusion ---------------------------------------------------------------

def test_confusion_examples():
    truth = np.array([1] * 10 + [0] * 5, bool)
    pred = np.array([1] * 8 + [0] * 2 + [0] * 5, bool)
    rep = se.confusion_metrics(pred, truth)
    assert rep.sensitivity.value == 0.8
    rep = se.confusion_metrics(truth, truth)
    assert rep.sensitivity.value == rep.specificity.value == rep.precision.value == 1.0


def test_confusion_matches_enumeration(rng):
    for _ in range(50):
        pred = rng.random(50) < 0.5
        truth = rng.random(50) < 0.4
        rep = se.confusion_metrics(pred, truth)
        counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
        for p, t in zip(pred, truth):
            counts[("t" if p == t else "f") + ("p" if p else "n")] += 1
        assert (rep.tp, rep.fp, rep.tn, rep.fn) == (counts["tp"], counts["fp"], counts["tn"], counts["fn"])
        assert rep.total == 50


def test_undefined_rates_are_absent():
    rep = se.confusion_metrics(np.zeros(5, bool), np.zeros(5, bool))
    assert rep.sensitivity is None and rep.precision is None and rep.f1 is None
    assert rep.specificity.value == 1.0


def test_probability_input_uses_threshold():
    rep = se.confusion_metrics(np.array([0.49, 0.5, 0.7]), np.array([0, 1, 1]))
    assert (rep.tp, rep.tn) == (2, 1)


def test_wilson_interval_known_value():
    lo, hi = se.wilson_interval(8, 10)
    # closed form with z = 1.959964
    z = se.Z95
    centre = (0.8 + z * z / 20) / (1 + z * z / 10)
    half = z * math.sqrt(0.8 * 0.2 / 10 + z * z / 400) / (1 + z * z / 10)
    assert lo == pytest.approx(centre - half, abs=1e-15)
    assert hi == pytest.approx(centre + half, abs=1e-15)
    assert round(lo, 4) == 0.4902 and round(hi, 4) == 0.9433
    assert se.wilson_interval(0, 0) is None


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 500), st.data())
def test_wilson_contains_point_estimate(total, data):
    k = data.draw(st.integers(0, total))
    lo, hi = se.wilson_interval(k, total)
    assert 0 <= lo <= k / total <= hi <= 1


# -- rmcorr ------------------------------------------------------------------

def test_rmcorr_perfect_within_fit():
    rows = [(p, x, x + off) for p, off in (("a", 3.0), ("b", -7.0), ("c", 40.0)) for x in (1.0, 2.0, 5.0)]
    res = se.rmcorr(rows)
    assert res.r == pytest.approx(1.0) and res.slope == pytest.approx(1.0)


def test_rmcorr_matches_anova_oracle(rng):
    for _ in range(200):
        pid, x, y = random_rmcorr_data(rng)
        res = se.rmcorr(zip(pid, x, y))
        beta, r, p = oracles.rmcorr_anova(pid, x, y)
        assert abs(res.slope - beta) <= 1e-9
        assert abs(res.r - r) <= 1e-9
        assert abs(res.p_value - p) <= 1e-9


def test_rmcorr_intercept_and_scale_invariance(rng):
    for _ in range(100):
        pid, x, y = random_rmcorr_data(rng)
        base = se.rmcorr(zip(pid, x, y))
        shift = {p: rng.normal(0, 100) for p in set(pid)}
        y2 = y + np.array([shift[p] for p in pid])
        assert abs(se.rmcorr(zip(pid, x, y2)).r - base.r) <= 1e-9
        a, b = rng.uniform(0.1, 10), rng.normal(0, 5)
        scaled = se.rmcorr(zip(pid, a * x + b, y))
        assert abs(scaled.r - base.r) <= 1e-9
        assert abs(scaled.slope * a - base.slope) <= 1e-9 * max(1.0, abs(base.slope))


def test_rmcorr_independent_data_has_small_r():
    rng = np.random.default_rng(3)
    pid = np.repeat([f"p{i}" for i in range(40)], 25)
    res = se.rmcorr(zip(pid, rng.normal(size=pid.size), rng.normal(size=pid.size)))
    assert abs(res.r) < 0.1 and res.p_value > 0.01


def test_rmcorr_degenerate_designs():
    with pytest.raises(ValueError):
        se.rmcorr([("a", 1, 2), ("a", 2, 3), ("a", 3, 1)])
    with pytest.raises(se.DegenerateDesign):
        se.rmcorr([("a", 1, 2), ("b", 2, 3), ("c", 3, 1)])
    with pytest.raises(se.DegenerateDesign):
        se.rmcorr([("a", 1, 2), ("a", 1, 3), ("b", 2, 1), ("b", 2, 5)])


def test_log_scale_rmcorr_exclusion_and_delegation(rng):
    rows = [(p, float(rng.uniform(0.5, 5)), float(rng.uniform(0.5, 5))) for p in "abcd" for _ in range(4)]
    direct = se.rmcorr([(p, math.log(x), math.log(y)) for p, x, y in rows])
    assert se.log_scale_rmcorr(rows).r == direct.r
    res = se.log_scale_rmcorr(rows + [("a", 0.0, 1.0)])
    assert res.n_excluded == 1 and res.r == direct.r
    with pytest.raises(ValueError):
        se.log_scale_rmcorr([("a", 0.0, 1.0)])


def test_log_scale_recovers_power_law():
    rng = np.random.default_rng(5)
    rows = []
    for i in range(10):
        c = rng.uniform(0.5, 3)
        for x in rng.uniform(0.5, 20, 8):
            rows.append((f"p{i}", x, c * x ** 1.7 * math.exp(rng.normal(0, 0.05))))
    assert se.log_scale_rmcorr(rows).slope == pytest.approx(1.7, abs=0.05)


def test_nrs_correlation():
    rng = np.random.default_rng(1)
    rows = []
    for i in range(12):
        base = rng.normal()
        for nrs in rng.integers(0, 11, 6):
            rows.append((f"p{i}", math.exp(base + 0.08 * nrs + rng.normal(0, 0.3)), int(nrs)))
    res = se.mixed_effect_nrs_corr(rows)
    assert 0 < res.r < 0.9
    same = se.rmcorr([(p, n, math.log(s)) for p, s, n in rows])
    assert res.r == same.r and res.p_value == same.p_value
    with pytest.raises(se.DegenerateDesign):
        se.mixed_effect_nrs_corr([(p, 1.0 + k, 5) for p in "abc" for k in range(3)])


# -- Wilcoxon ----------------------------------------------------------------

def test_signed_rank_all_positive_is_one_over_32():
    res = se.wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0, 5.0], 0.0, "greater")
    assert res.p_value == 1 / 32 and res.exact


def test_signed_rank_symmetric_is_near_half():
    res = se.wilcoxon_signed_rank([-3, -2, -1, 1, 2, 3], 0.0, "greater")
    assert abs(res.p_value - 0.5) < 0.1


def test_signed_rank_matches_enumeration(rng):
    for n in range(1, 11):
        for _ in range(5):
            x = rng.integers(-5, 6, n).astype(float)
            x[x == 0] = 0.5
            for alt in ("greater", "less", "two-sided"):
                ours = se.wilcoxon_signed_rank(x, 0.0, alt).p_value
                assert abs(ours - oracles.signed_rank_enumeration(x, 0.0, alt)) <= 1e-12


def test_signed_rank_errors_and_normal_path():
    with pytest.raises(ValueError):
        se.wilcoxon_signed_rank([2.0, 2.0], 2.0)
    x = np.arange(1, 31, dtype=float)
    res = se.wilcoxon_signed_rank(x, 0.0, "greater")
    assert not res.exact and res.p_value < 1e-5


def test_rank_sum_one_over_70():
    res = se.wilcoxon_rank_sum([5, 6, 7, 8], [1, 2, 3, 4], "greater")
    assert res.p_value == 1 / 70 and res.statistic == 16


def test_rank_sum_equal_samples():
    res = se.wilcoxon_rank_sum([1, 2, 3, 4], [1, 2, 3, 4], "greater")
    assert res.statistic == 8.0
    assert abs(res.p_value - 0.5) < 0.15


def test_rank_sum_matches_enumeration(rng):
    for total in range(2, 11):
        for na in range(1, total):
            a = rng.integers(0, 6, na).astype(float)
            b = rng.integers(0, 6, total - na).astype(float)
            for alt in ("greater", "less", "two-sided"):
                ours = se.wilcoxon_rank_sum(a, b, alt).p_value
                assert abs(ours - oracles.rank_sum_enumeration(a, b, alt)) <= 1e-12


def test_rank_sum_tie_free_identity(rng):
    for _ in range(50):
        vals = rng.permutation(20)[: int(rng.integers(2, 11))].astype(float)
        na = int(rng.integers(1, vals.size))
        a, b = vals[:na], vals[na:]
        p_ab = se.wilcoxon_rank_sum(a, b, "greater").p_value
        p_ba = se.wilcoxon_rank_sum(b, a, "greater").p_value
        # P(U = observed) by enumeration of every split
        u_obs = se.wilcoxon_rank_sum(a, b, "greater").statistic
        ranks = np.argsort(np.argsort(vals)) + 1
        hits = total = 0
        for combo in itertools.combinations(ranks, na):
            total += 1
            hits += sum(combo) - na * (na + 1) / 2 == u_obs
        assert p_ab + p_ba == pytest.approx(1 + hits / total, abs=1e-12)


def test_rank_sum_validation():
    with pytest.raises(ValueError):
        se.wilcoxon_rank_sum([], [1.0])
    with pytest.raises(ValueError):
        se.wilcoxon_rank_sum([1.0], [2.0], "bigger")
