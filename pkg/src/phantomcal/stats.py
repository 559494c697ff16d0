"""Nonparametric statistics: normality screening, rank tests, FDR control.

Exact two-sided p-values are produced whenever the combined sample is small
enough (<= 20 observations, tie-free for the two-sample test); larger inputs
fall back to the tie-corrected normal approximation with continuity
correction. All p-values are clamped to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.stats

EXACT_LIMIT = 20  # combined-sample threshold for exact enumeration


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_two_sided: float
    method: str  # "exact" or "normal-approximation"
    n1: int
    n2: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_two_sided <= 1.0:
            raise ValueError(f"p-value {self.p_two_sided} outside [0, 1]")


def _normal_sf_two_sided(z: float) -> float:
    # two-sided tail mass of N(0,1) at |z|
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Fractional ranks (1-based); ties share the mean of their rank block."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _tie_term(pooled: np.ndarray) -> float:
    _, counts = np.unique(pooled, return_counts=True)
    return float(np.sum(counts.astype(np.float64) ** 3 - counts))


def _rank_sum_distribution(n: int, k: int) -> np.ndarray:
    """counts[s] = number of k-subsets of ranks {1..n} with rank sum s.

    Equivalent to enumerating every assignment of ranks to the first sample.
    """
    max_sum = n * (n + 1) // 2
    table = np.zeros((k + 1, max_sum + 1), dtype=np.float64)
    table[0, 0] = 1.0
    for r in range(1, n + 1):
        for j in range(min(r, k), 0, -1):
            table[j, r:] += table[j - 1, : max_sum + 1 - r]
    return table[k]


def mann_whitney_u(xs: Sequence[float], ys: Sequence[float]) -> TestResult:
    """Two-sided Mann-Whitney U test.

    The statistic counts pairs with x > y, crediting 1/2 per tied pair.
    """
    x = np.asarray(list(xs), dtype=np.float64)
    y = np.asarray(list(ys), dtype=np.float64)
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")

    pooled = np.concatenate([x, y])
    ranks = _average_ranks(pooled)
    r1 = float(ranks[:n1].sum())
    u = r1 - n1 * (n1 + 1) / 2.0  # == sum over pairs [x>y] + 0.5*[x==y]

    has_ties = len(np.unique(pooled)) < n1 + n2
    if n1 + n2 <= EXACT_LIMIT and not has_ties:
        counts = _rank_sum_distribution(n1 + n2, n1)
        total = counts.sum()
        sums = np.arange(len(counts), dtype=np.float64)
        u_all = sums - n1 * (n1 + 1) / 2.0
        p_le = counts[u_all <= u + 1e-9].sum() / total
        p_ge = counts[u_all >= u - 1e-9].sum() / total
        p = min(1.0, 2.0 * min(p_le, p_ge))
        return TestResult(u, p, "exact", n1, n2)

    n = n1 + n2
    mean = n1 * n2 / 2.0
    var = n1 * n2 / 12.0 * ((n + 1) - _tie_term(pooled) / (n * (n - 1)))
    if var <= 0:
        return TestResult(u, 1.0, "normal-approximation", n1, n2)
    z = max(0.0, abs(u - mean) - 0.5) / math.sqrt(var)  # continuity correction
    return TestResult(u, _normal_sf_two_sided(z), "normal-approximation", n1, n2)


def _signed_rank_distribution(ranks2: np.ndarray) -> dict[int, int]:
    """counts[s] = number of sign patterns whose positive-part sum equals s.

    ``ranks2`` holds doubled ranks so tied (half-integer) ranks stay integral.
    Equivalent to enumerating all 2^n sign assignments.
    """
    counts = {0: 1}
    for r in ranks2:
        nxt: dict[int, int] = {}
        for s, c in counts.items():
            nxt[s] = nxt.get(s, 0) + c
            nxt[s + r] = nxt.get(s + r, 0) + c
        counts = nxt
    return counts


def wilcoxon_signed_rank(pairs: Iterable[tuple[float, float]]) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired observations.

    Zero differences are dropped; tied absolute differences share average
    ranks. The statistic is min(W+, W-).
    """
    diffs = np.asarray([float(a) - float(b) for a, b in pairs], dtype=np.float64)
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n == 0:
        raise ValueError("all differences are zero")

    ranks = _average_ranks(np.abs(diffs))
    w_pos = float(ranks[diffs > 0].sum())
    w_neg = float(ranks[diffs < 0].sum())
    w = min(w_pos, w_neg)
    total = n * (n + 1) / 2.0

    if n <= EXACT_LIMIT:
        ranks2 = np.rint(2.0 * ranks).astype(np.int64)
        dist = _signed_rank_distribution(ranks2)
        denom = float(2**n)
        w2_lo = int(round(2.0 * w))
        w2_hi = int(round(2.0 * (total - w)))
        lo_mass = sum(c for s, c in dist.items() if s <= w2_lo)
        hi_mass = sum(c for s, c in dist.items() if s >= w2_hi)
        p = min(1.0, (lo_mass + hi_mass) / denom)
        return TestResult(w, p, "exact", n)

    _, tie_counts = np.unique(np.abs(diffs), return_counts=True)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(
        np.sum(tie_counts.astype(np.float64) ** 3 - tie_counts)
    ) / 48.0
    if var <= 0:
        return TestResult(w, 1.0, "normal-approximation", n)
    z = max(0.0, abs(w_pos - mean) - 0.5) / math.sqrt(var)
    return TestResult(w, _normal_sf_two_sided(z), "normal-approximation", n)


def shapiro_wilk(xs: Sequence[float]) -> TestResult:
    """Shapiro-Wilk normality test (Royston's AS R94 formulation)."""
    x = np.asarray(list(xs), dtype=np.float64)
    n = len(x)
    if not 3 <= n <= 5000:
        raise ValueError(f"sample size must be in [3, 5000], got {n}")
    if np.ptp(x) == 0.0:
        raise ValueError("sample has zero variance")
    w, p = scipy.stats.shapiro(x)
    method = "exact" if n == 3 else "normal-approximation"
    return TestResult(float(w), float(min(max(p, 0.0), 1.0)), method, n)


def bh_adjust(ps: Sequence[float]) -> list[float]:
    """Benjamini-Hochberg step-up adjustment, returned in input order."""
    p = np.asarray(list(ps), dtype=np.float64)
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p)
    if m == 0:
        return []
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum(1.0, np.minimum.accumulate(scaled[::-1])[::-1])
    out = np.empty(m, dtype=np.float64)
    out[order] = adjusted_sorted
    return out.tolist()


def median_iqr(xs: Sequence[float]) -> tuple[float, float]:
    """Median and interquartile range using linear order-statistic interpolation."""
    x = np.asarray(list(xs), dtype=np.float64)
    q25, q50, q75 = np.quantile(x, [0.25, 0.5, 0.75])
    return float(q50), float(q75 - q25)


def summarize(xs: Sequence[float], alpha: float = 0.05) -> str:
    """Format a sample as ``mean +/- sd`` when normal else ``median (IQR)``.

    Normality is screened with the Shapiro-Wilk test at ``alpha``; the sd is
    the sample standard deviation (n-1). Constant samples, for which the
    screen is undefined, use the median (IQR) form.
    """
    x = np.asarray(list(xs), dtype=np.float64)
    if len(x) < 3:
        raise ValueError(f"need at least 3 values, got {len(x)}")
    if np.ptp(x) > 0.0 and shapiro_wilk(x).p_two_sided >= alpha:
        return f"{np.mean(x):.4g} ± {np.std(x, ddof=1):.4g}"
    med, iqr = median_iqr(x)
    return f"{med:.4g} ({iqr:.4g})"
