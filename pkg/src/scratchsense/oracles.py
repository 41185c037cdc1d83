"""Slow, independent reference computations used by the test suite and `selftest`.

Each oracle takes a different route from the production code (explicit loops,
enumeration, dense least squares) so agreement is meaningful.
"""
from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np
from scipy import special

# ---------------------------------------------------------------------------
# DSP
# ---------------------------------------------------------------------------


def naive_dft(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Textbook O(N^2) DFT along ``axis``."""
    x = np.moveaxis(np.asarray(x, dtype=complex), axis, 0)
    n = x.shape[0]
    out = np.zeros_like(x)
    for k in range(n):
        acc = np.zeros(x.shape[1:], dtype=complex)
        for i in range(n):
            acc = acc + x[i] * complex(math.cos(-2 * math.pi * k * i / n), math.sin(-2 * math.pi * k * i / n))
        out[k] = acc
    return np.moveaxis(out, 0, axis)


def beam_power(snapshot: Sequence[complex], sin_grid: Sequence[float]) -> np.ndarray:
    """|sum_m x_m exp(-j pi m s)|^2 / M^2 for each grid point, by explicit sums."""
    m_count = len(snapshot)
    out = []
    for s in sin_grid:
        acc = 0j
        for m, xm in enumerate(snapshot):
            acc += xm * complex(math.cos(-math.pi * m * s), math.sin(-math.pi * m * s))
        out.append(abs(acc / m_count) ** 2)
    return np.array(out)


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------


def naive_conv1d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Same-padded cross-correlation by four nested loops.  x (B, Cin, T), w (Cout, Cin, K)."""
    B, cin, T = x.shape
    cout, _, K = w.shape
    pad = K // 2
    out = np.zeros((B, cout, T))
    for n in range(B):
        for o in range(cout):
            for t in range(T):
                acc = 0.0 if b is None else float(b[o])
                for c in range(cin):
                    for k in range(K):
                        s = t + k - pad
                        if 0 <= s < T:
                            acc += w[o, c, k] * x[n, c, s]
                out[n, o, t] = acc
    return out


def naive_cosine_tsm(features: np.ndarray, lookahead: int) -> np.ndarray:
    """(T, D) features -> (T, L) cosine similarity of f_t and f_{t+l}; 0 past the end or on zero vectors."""
    T = features.shape[0]
    out = np.zeros((T, lookahead))
    for t in range(T):
        for lag in range(lookahead):
            if t + lag >= T:
                continue
            a, b = features[t], features[t + lag]
            na, nb = math.sqrt(float(a @ a)), math.sqrt(float(b @ b))
            if na > 0 and nb > 0:
                out[t, lag] = float(a @ b) / (na * nb)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def finite_difference_gradients(loss: Callable[[dict[str, np.ndarray]], float],
                                params: dict[str, np.ndarray], h: float = 1e-4) -> dict[str, np.ndarray]:
    """Central differences (f(p + h) - f(p - h)) / 2h for every scalar parameter."""
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p, dtype=float)
        flat = p.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss(params)
            flat[i] = keep - h
            down = loss(params)
            flat[i] = keep
            g.reshape(-1)[i] = (up - down) / (2 * h)
        grads[name] = g
    return grads


# ---------------------------------------------------------------------------
# ROC / PR
# ---------------------------------------------------------------------------


def mann_whitney_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie) over every positive/negative pair."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    pos, neg = s[y], s[~y]
    wins = 0
    ties = 0
    for a in pos:
        wins += int(np.sum(a > neg))
        ties += int(np.sum(a == neg))
    return (2 * wins + ties) / (2.0 * pos.size * neg.size)


def average_precision(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Mean over thresholds at each distinct score of precision x recall increment."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    total_pos = int(y.sum())
    ap = 0.0
    prev_recall = 0.0
    for thr in sorted(set(s.tolist()), reverse=True):
        chosen = s >= thr
        tp = int(np.sum(chosen & y))
        recall = tp / total_pos
        ap += (recall - prev_recall) * tp / int(chosen.sum())
        prev_recall = recall
    return ap


# ---------------------------------------------------------------------------
# rmcorr
# ---------------------------------------------------------------------------


def rmcorr_anova(participants: Sequence[str], x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """(beta, r, p) from dense least squares with participant dummies and a nested-model F test."""
    pid = list(participants)
    levels = sorted(set(pid))
    n, k = len(pid), len(levels)
    dummies = np.zeros((n, k))
    for i, p in enumerate(pid):
        dummies[i, levels.index(p)] = 1.0
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    full = np.column_stack([dummies, x])
    coef, *_ = np.linalg.lstsq(full, y, rcond=None)
    rss_full = float(np.sum((y - full @ coef) ** 2))
    coef0, *_ = np.linalg.lstsq(dummies, y, rcond=None)
    rss_reduced = float(np.sum((y - dummies @ coef0) ** 2))
    ss_x = rss_reduced - rss_full
    beta = float(coef[-1])
    r = math.copysign(math.sqrt(ss_x / (ss_x + rss_full)), beta)
    dof = n - k - 1
    f = ss_x / (rss_full / dof)
    # F(1, dof) survival function through the regularised incomplete beta
    p = float(special.betainc(dof / 2.0, 0.5, dof / (dof + f)))
    return beta, r, p


# ---------------------------------------------------------------------------
# Wilcoxon by enumeration
# ---------------------------------------------------------------------------


def _ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for t in range(i, j + 1):
            ranks[order[t]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _p_from_counts(stats_all: list[float], observed: float, alternative: str) -> float:
    total = len(stats_all)
    eps = 1e-9
    ge = sum(1 for s in stats_all if s >= observed - eps)
    le = sum(1 for s in stats_all if s <= observed + eps)
    if alternative == "greater":
        return ge / total
    if alternative == "less":
        return le / total
    return min(1.0, 2.0 * min(ge, le) / total)


def signed_rank_enumeration(x: Sequence[float], mu0: float = 0.0, alternative: str = "greater") -> float:
    """Exact p by visiting all 2^n sign flips of the nonzero differences."""
    d = [v - mu0 for v in x if v - mu0 != 0]
    ranks = _ranks([abs(v) for v in d])
    observed = sum(r for r, v in zip(ranks, d) if v > 0)
    stats_all = [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product((0, 1), repeat=len(d))]
    return _p_from_counts(stats_all, observed, alternative)


def rank_sum_enumeration(a: Sequence[float], b: Sequence[float], alternative: str = "greater") -> float:
    """Exact p by visiting every way to pick which pooled positions belong to ``a``."""
    pooled = list(a) + list(b)
    ranks = _ranks(pooled)
    n_a = len(a)
    observed = sum(ranks[:n_a])
    stats_all = [sum(ranks[i] for i in pick) for pick in itertools.combinations(range(len(pooled)), n_a)]
    return _p_from_counts(stats_all, observed, alternative)


# ---------------------------------------------------------------------------
# sleep
# ---------------------------------------------------------------------------


def per_stage_seconds_loop(stages: Sequence[int], scratch_mask: Sequence[bool], ticks_per_epoch: int,
                           tick_rate: float) -> dict[int, float]:
    """Walk every tick, look up its epoch's stage, tally scratching seconds."""
    out = {s: 0.0 for s in range(4)}
    counts = {s: 0 for s in range(4)}
    for t, scratching in enumerate(scratch_mask):
        epoch = t // ticks_per_epoch
        if epoch >= len(stages):
            break
        if scratching:
            counts[int(stages[epoch])] += 1
    for s in out:
        out[s] = counts[s] / tick_rate
    return out
