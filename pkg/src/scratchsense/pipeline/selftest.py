"""Oracle suites run by `scratchsense selftest`."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import oracles
from .. import stats_eval as se
from ..net.gradcheck import gradient_check


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def random_scores(rng: np.random.Generator, n_max: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Scores on a coarse grid (so ties are common) with both classes present."""
    n = int(rng.integers(2, n_max + 1))
    labels = rng.random(n) < rng.uniform(0.1, 0.9)
    labels[0], labels[1] = True, False
    scores = rng.integers(0, int(rng.integers(2, 30)), n) / 7.0
    return scores, labels


def random_rmcorr_data(rng: np.random.Generator):
    k = int(rng.integers(2, 7))
    pid, x, y = [], [], []
    for i in range(k):
        m = int(rng.integers(2, 6))
        shift = rng.normal(0, 3)
        xs = rng.normal(shift, 1, m)
        ys = 0.7 * xs + rng.normal(rng.normal(0, 3), 1, m)
        pid += [f"p{i}"] * m
        x += xs.tolist()
        y += ys.tolist()
    if len(x) - k - 1 < 1:
        pid += ["p0"]
        x.append(float(rng.normal()))
        y.append(float(rng.normal()))
    return pid, np.array(x), np.array(y)


def auc_identity(sets: int = 200, seed: int = 0) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(sets):
        s, y = random_scores(rng)
        worst = max(worst, abs(se.roc_points_and_auc(s, y).auc - oracles.mann_whitney_auc(s, y)))
    return Check("auc identity", worst <= 1e-12, f"max |trapezoid - Mann-Whitney| = {worst:.2e} over {sets} sets")


def rmcorr_oracle(sets: int = 50, seed: int = 0) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(sets):
        pid, x, y = random_rmcorr_data(rng)
        res = se.rmcorr(zip(pid, x, y))
        beta, r, p = oracles.rmcorr_anova(pid, x, y)
        worst = max(worst, abs(res.slope - beta), abs(res.r - r), abs(res.p_value - p))
    return Check("rmcorr oracle", worst <= 1e-9, f"max deviation from dense ANOVA = {worst:.2e} over {sets} sets")


def wilcoxon_enumeration(max_n: int = 8, seed: int = 0) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in range(1, max_n + 1):
        x = rng.integers(-4, 5, n).astype(float)
        x[x == 0] = 1.0
        for alt in ("greater", "less", "two-sided"):
            worst = max(worst, abs(se.wilcoxon_signed_rank(x, 0.0, alt).p_value
                                   - oracles.signed_rank_enumeration(x, 0.0, alt)))
    for na in range(1, max_n):
        nb = max_n - na
        a = rng.integers(0, 5, na).astype(float)
        b = rng.integers(0, 5, nb).astype(float)
        for alt in ("greater", "less", "two-sided"):
            worst = max(worst, abs(se.wilcoxon_rank_sum(a, b, alt).p_value
                                   - oracles.rank_sum_enumeration(a, b, alt)))
    return Check("wilcoxon enumeration", worst <= 1e-12, f"max |exact - enumeration| = {worst:.2e}")


def gradient_suite(seed: int = 0) -> Check:
    res = gradient_check(seed=seed)
    return Check("gradient check", res.passed(1e-4),
                 f"max relative error {res.max_rel_error:.2e} ({res.worst_parameter}) over {res.n_parameters} parameters")


def run_selftest(seed: int = 0) -> list[Check]:
    return [gradient_suite(seed), auc_identity(seed=seed), rmcorr_oracle(seed=seed), wilcoxon_enumeration(seed=seed)]
