"""Evaluation statistics: STH/SBH, ROC/PR, confusion rates, rmcorr, Wilcoxon tests."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .labels_gt import TICK_RATE_HZ, BoutList, mask_to_bouts

Z95 = float(stats.norm.ppf(0.975))


# ---------------------------------------------------------------------------
# scratching time / bouts per hour
# ---------------------------------------------------------------------------

def _scratch_ticks(series_or_bouts) -> int:
    if isinstance(series_or_bouts, BoutList):
        return series_or_bouts.total_ticks()
    arr = np.asarray(series_or_bouts)
    if arr.dtype == bool:
        return int(arr.sum())
    return int(np.count_nonzero(arr == 1))


def _hours(hours_in_bed: float) -> float:
    if not hours_in_bed > 0:
        raise ValueError("hours_in_bed must be > 0")
    return float(hours_in_bed)


def sth(series_or_bouts, hours_in_bed: float, tick_rate: float = TICK_RATE_HZ) -> float:
    """Minutes of scratching per hour in bed.

    Accepts a boolean scratch mask, an integer label series (1 = scratch) or
    a BoutList.
    """
    hours = _hours(hours_in_bed)
    return _scratch_ticks(series_or_bouts) / tick_rate / 60.0 / hours


def sbh(bouts: BoutList | np.ndarray, hours_in_bed: float) -> float:
    """Scratching bouts per hour in bed."""
    hours = _hours(hours_in_bed)
    if not isinstance(bouts, BoutList):
        arr = np.asarray(bouts)
        bouts = mask_to_bouts(arr if arr.dtype == bool else arr == 1)
    return len(bouts) / hours


# ---------------------------------------------------------------------------
# ROC / PR
# ---------------------------------------------------------------------------

def _binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return scores, labels


def _threshold_counts(scores: np.ndarray, labels: np.ndarray):
    """Cumulative (TP, FP) after admitting each distinct score, highest first."""
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last_of_group]
    fp = np.cumsum(~y)[last_of_group]
    return s[last_of_group], tp.astype(np.int64), fp.astype(np.int64)


@dataclass
class Curve:
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray
    auc: float

    def points(self) -> list[list[float]]:
        return [[float(a), float(b)] for a, b in zip(self.x, self.y)]


def roc_points_and_auc(scores, binary_labels) -> Curve:
    """ROC curve (fpr, tpr) over the distinct scores; trapezoidal AUC.

    Equal scores enter together, so tied positive/negative pairs count one half.
    """
    scores, labels = _binary(scores, binary_labels)
    P, N = int(labels.sum()), int((~labels).sum())
    if P == 0 or N == 0:
        raise ValueError("ROC needs both positive and negative examples")
    thr, tp, fp = _threshold_counts(scores, labels)
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    # integer trapezoid numerator: sum dFP * (TP_prev + TP_cur), exact in int64
    twice_area = int(np.sum(np.diff(fp) * (tp[:-1] + tp[1:])))
    auc = twice_area / (2.0 * P * N)
    return Curve(fp / N, tp / P, np.r_[np.inf, thr], auc)


def pr_points_and_auc(scores, binary_labels) -> Curve:
    """Precision-recall curve; AUC by step-wise summation (average precision)."""
    scores, labels = _binary(scores, binary_labels)
    P = int(labels.sum())
    if P == 0:
        raise ValueError("PR curve needs at least one positive")
    thr, tp, fp = _threshold_counts(scores, labels)
    recall = tp / P
    precision = tp / (tp + fp)
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return Curve(np.r_[0.0, recall], np.r_[1.0, precision], np.r_[np.inf, thr], ap)


# ---------------------------------------------------------------------------
# confusion metrics
# ---------------------------------------------------------------------------

def wilson_interval(successes: int, total: int, z: float = Z95) -> tuple[float, float] | None:
    if total <= 0:
        return None
    p = successes / total
    denom = 1.0 + z * z / total
    centre = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    # at k = 0 or k = n one bound is exactly 0 or 1; rounding would leave ~1e-17
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == total else min(1.0, centre + half)
    return lo, hi


@dataclass
class Rate:
    value: float
    ci_low: float
    ci_high: float
    successes: int
    total: int

    @classmethod
    def of(cls, successes: int, total: int) -> "Rate | None":
        ci = wilson_interval(successes, total)
        if ci is None:
            return None
        return cls(successes / total, ci[0], ci[1], successes, total)


@dataclass
class ConfusionReport:
    tp: int
    fp: int
    tn: int
    fn: int
    sensitivity: Rate | None
    specificity: Rate | None
    precision: Rate | None
    f1: float | None

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_metrics(pred_scratch, true_scratch_mask, threshold: float = 0.5) -> ConfusionReport:
    """Per-tick confusion counts and rates.

    ``pred_scratch`` may be a boolean mask or scratch probabilities; scores
    at or above ``threshold`` count as positive.  Rates with a zero
    denominator are reported as None.
    """
    pred = np.asarray(pred_scratch).ravel()
    truth = np.asarray(true_scratch_mask).ravel().astype(bool)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth must have equal length")
    pred = pred.astype(bool) if pred.dtype == bool else pred >= threshold
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    tn = int(np.sum(~pred & ~truth))
    fn = int(np.sum(~pred & truth))
    sens = Rate.of(tp, tp + fn)
    spec = Rate.of(tn, tn + fp)
    prec = Rate.of(tp, tp + fp)
    f1 = None
    if sens is not None and prec is not None and sens.value + prec.value > 0:
        f1 = 2 * prec.value * sens.value / (prec.value + sens.value)
    return ConfusionReport(tp, fp, tn, fn, sens, spec, prec, f1)


# ---------------------------------------------------------------------------
# repeated-measures correlation
# ---------------------------------------------------------------------------

@dataclass
class RmcorrResult:
    r: float
    p_value: float
    slope: float
    dof: int
    n_obs: int
    n_participants: int
    n_excluded: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class DegenerateDesign(ValueError):
    """No within-participant variation to estimate a common slope from."""


def _group(triples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = list(triples)
    if not rows:
        raise ValueError("no observations")
    pid = np.array([str(r[0]) for r in rows])
    x = np.array([float(r[1]) for r in rows])
    y = np.array([float(r[2]) for r in rows])
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("observations must be finite")
    return pid, x, y


def rmcorr(triples: Iterable[tuple[str, float, float]]) -> RmcorrResult:
    """Common-slope ANCOVA: y_ij = a_i + beta * x_ij + e_ij.

    r = sign(beta) * sqrt(SS_slope / (SS_slope + SS_resid)); p from the
    F(1, N - k - 1) test of the slope.
    """
    pid, x, y = _group(triples)
    _, inverse, counts = np.unique(pid, return_inverse=True, return_counts=True)
    k, n = counts.size, x.size
    if k < 2:
        raise ValueError("rmcorr needs at least 2 participants")
    dof = n - k - 1
    if n < 3 or dof < 1:
        raise DegenerateDesign(f"{n} observations from {k} participants leave {dof} residual dof")
    xc = x - (np.bincount(inverse, x) / counts)[inverse]
    yc = y - (np.bincount(inverse, y) / counts)[inverse]
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    sxy = float(xc @ yc)
    if sxx <= 1e-300 * max(1.0, float(x @ x)):
        raise DegenerateDesign("x does not vary within any participant")
    slope = sxy / sxx
    ss_slope = slope * sxy
    ss_resid = max(syy - ss_slope, 0.0)
    total = ss_slope + ss_resid
    if total <= 0:
        raise DegenerateDesign("y does not vary within any participant")
    r = math.copysign(math.sqrt(ss_slope / total), slope)
    if ss_resid == 0:
        p = 0.0
    else:
        p = float(stats.f.sf(ss_slope / (ss_resid / dof), 1, dof))
    return RmcorrResult(r, p, slope, dof, n, k)


def log_scale_rmcorr(triples: Iterable[tuple[str, float, float]]) -> RmcorrResult:
    """rmcorr on (log x, log y) after dropping points where either log is undefined."""
    rows = list(triples)
    kept = [(p, math.log(x), math.log(y)) for p, x, y in rows if x > 0 and y > 0]
    if not kept:
        raise ValueError("every observation was excluded (non-positive values)")
    res = rmcorr(kept)
    res.n_excluded = len(rows) - len(kept)
    return res


def mixed_effect_nrs_corr(triples: Iterable[tuple[str, float, float]]) -> RmcorrResult:
    """Random-intercept fit of log(scratch) on untransformed NRS.

    Input rows are (participant, scratch_measure, nrs); rows with a
    non-positive scratch measure are excluded.
    """
    rows = list(triples)
    kept = [(p, float(nrs), math.log(s)) for p, s, nrs in rows if s > 0]
    if not kept:
        raise ValueError("every observation was excluded (non-positive scratch measure)")
    res = rmcorr(kept)
    res.n_excluded = len(rows) - len(kept)
    return res


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float] | None:
    """Pearson r and two-sided p, or None when undefined (n < 3 or a constant input)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    res = stats.pearsonr(x, y)
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# Wilcoxon tests
# ---------------------------------------------------------------------------

EXACT_MAX_N = 12
_ALTERNATIVES = ("greater", "less", "two-sided")


@dataclass
class TestResult:
    statistic: float
    p_value: float
    n: int
    exact: bool


def _midranks(values: np.ndarray) -> np.ndarray:
    return stats.rankdata(values, method="average")


def _tie_term(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts.astype(float) ** 3 - counts))


def _tail_p(dist: dict[int, int], observed2: int, total: int, alternative: str) -> float:
    """p-value from an exact count distribution over doubled statistics."""
    ge = sum(c for s, c in dist.items() if s >= observed2)
    le = sum(c for s, c in dist.items() if s <= observed2)
    if alternative == "greater":
        return ge / total
    if alternative == "less":
        return le / total
    return min(1.0, 2.0 * min(ge, le) / total)


def _signed_rank_distribution(ranks2: Sequence[int]) -> dict[int, int]:
    """Counts of the doubled positive-rank sum over all 2^n sign assignments."""
    dist = {0: 1}
    for r in ranks2:
        nxt: dict[int, int] = {}
        for s, c in dist.items():
            nxt[s] = nxt.get(s, 0) + c
            nxt[s + r] = nxt.get(s + r, 0) + c
        dist = nxt
    return dist


def wilcoxon_signed_rank(x: Sequence[float], mu0: float = 0.0, alternative: str = "greater") -> TestResult:
    """One-sample signed-rank test of x against mu0.

    Statistic W+ is the sum of midranks of |x - mu0| over positive
    differences; zero differences are dropped.  Exact for n <= 12,
    otherwise a normal approximation with tie and continuity corrections.
    """
    if alternative not in _ALTERNATIVES:
        raise ValueError(f"alternative must be one of {_ALTERNATIVES}")
    d = np.asarray(x, dtype=float) - mu0
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise ValueError("all differences from mu0 are zero")
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        ranks2 = [int(round(2 * r)) for r in ranks]
        dist = _signed_rank_distribution(ranks2)
        p = _tail_p(dist, int(round(2 * w_plus)), 2 ** n, alternative)
        return TestResult(w_plus, p, n, True)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(np.abs(d)) / 48.0
    p = _normal_p(w_plus, mean, var, alternative)
    return TestResult(w_plus, p, n, False)


def _normal_p(stat: float, mean: float, var: float, alternative: str) -> float:
    if var <= 0:
        return 1.0
    sd = math.sqrt(var)
    if alternative == "greater":
        return float(stats.norm.sf((stat - mean - 0.5) / sd))
    if alternative == "less":
        return float(stats.norm.cdf((stat - mean + 0.5) / sd))
    z = (abs(stat - mean) - 0.5) / sd
    return float(min(1.0, 2.0 * stats.norm.sf(max(z, 0.0))))


def _rank_sum_distribution(ranks2: Sequence[int], n_a: int) -> dict[int, int]:
    """Counts of the doubled rank sum of every size-n_a subset of the pooled ranks."""
    # table[j] maps doubled sum -> number of j-subsets
    table: list[dict[int, int]] = [{0: 1}] + [{} for _ in range(n_a)]
    for r in ranks2:
        for j in range(n_a, 0, -1):
            src, dst = table[j - 1], table[j]
            for s, c in src.items():
                dst[s + r] = dst.get(s + r, 0) + c
    return table[n_a]


def wilcoxon_rank_sum(a: Sequence[float], b: Sequence[float], alternative: str = "greater") -> TestResult:
    """Two-sample rank-sum (Mann-Whitney U) test; 'greater' means a tends to exceed b.

    U = R_a - n_a(n_a+1)/2 with midranks.  Exact by enumerating rank
    assignments when n_a + n_b <= 12, else tie-corrected normal
    approximation with continuity correction.
    """
    if alternative not in _ALTERNATIVES:
        raise ValueError(f"alternative must be one of {_ALTERNATIVES}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    n_a, n_b = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    offset = n_a * (n_a + 1) / 2.0
    u = float(ranks[:n_a].sum() - offset)
    n = n_a + n_b
    if n <= EXACT_MAX_N:
        ranks2 = [int(round(2 * r)) for r in ranks]
        dist = _rank_sum_distribution(ranks2, n_a)
        observed2 = int(round(2 * (u + offset)))
        p = _tail_p(dist, observed2, math.comb(n, n_a), alternative)
        return TestResult(u, p, n, True)
    mean = n_a * n_b / 2.0
    var = n_a * n_b / 12.0 * ((n + 1) - _tie_term(pooled) / (n * (n - 1)))
    return TestResult(u, _normal_p(u, mean, var, alternative), n, False)
