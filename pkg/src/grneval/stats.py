"""Nonparametric two-sample kernels and multiple-testing correction.

Single-cell expression is zero inflated, so ties are the norm rather than a
corner case; every rank-based test here uses midranks. All functions are
pure and safe to call from multiple threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import rankdata

#: Largest per-sample size for which the Mann-Whitney p-value is exact.
MWU_EXACT_LIMIT = 8


@dataclass(frozen=True)
class TestResult:
    """Outcome of a hypothesis test.

    ``method`` records how the p-value was obtained: "exact",
    "normal_approx" or "table_interp", optionally suffixed with
    ":degenerate" (uninformative input) or ":clamped_low"/":clamped_high"
    (p-value pinned to the edge of the lookup table).
    """

    statistic: float
    p_value: float
    method: str


def _clean_sample(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} sample is empty")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} sample contains non-finite values")
    return arr


def wasserstein_1d(xs, ys) -> float:
    """Exact order-1 Wasserstein distance between two empirical distributions.

    Integrates the absolute CDF difference over the merged sample grid,
    which equals the integral of the absolute quantile-function difference.
    Symmetric in its arguments; equals mean absolute difference of the two
    sorted vectors when sizes match.
    """
    x = np.sort(_clean_sample(xs, "first"))
    y = np.sort(_clean_sample(ys, "second"))
    grid = np.sort(np.concatenate([x, y]))
    deltas = np.diff(grid)
    if deltas.size == 0:
        return 0.0
    cdf_x = np.searchsorted(x, grid[:-1], side="right") / x.size
    cdf_y = np.searchsorted(y, grid[:-1], side="right") / y.size
    return float(np.sum(np.abs(cdf_x - cdf_y) * deltas))


@lru_cache(maxsize=None)
def _mwu_counts(n1: int, n2: int) -> tuple[int, ...]:
    """Null distribution of U: counts over all C(n1+n2, n1) rank assignments."""
    if n1 == 0 or n2 == 0:
        return (1,)
    out = [0] * (n1 * n2 + 1)
    for u, c in enumerate(_mwu_counts(n1 - 1, n2)):
        out[u + n2] += c
    for u, c in enumerate(_mwu_counts(n1, n2 - 1)):
        out[u] += c
    return tuple(out)


def _mwu_exact_p(n1: int, n2: int, u: int) -> float:
    counts = _mwu_counts(n1, n2)
    total = sum(counts)
    lower = sum(counts[: u + 1])
    upper = sum(counts[u:])
    return min(1.0, 2.0 * min(lower, upper) / total)


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_u(xs, ys, exact_limit: int = MWU_EXACT_LIMIT) -> TestResult:
    """Two-sided Mann-Whitney U rank test.

    The statistic is U of the first sample (midranks under ties). With both
    sizes <= ``exact_limit`` and no ties the p-value comes from the exact
    null distribution; otherwise from the normal approximation with tie and
    continuity corrections.
    """
    x = _clean_sample(xs, "first")
    y = _clean_sample(ys, "second")
    n1, n2 = x.size, y.size
    pooled = np.concatenate([x, y])
    ranks = rankdata(pooled)
    u1 = float(np.sum(ranks[:n1]) - n1 * (n1 + 1) / 2.0)

    _, counts = np.unique(pooled, return_counts=True)
    has_ties = counts.size < pooled.size
    if not has_ties and n1 <= exact_limit and n2 <= exact_limit:
        return TestResult(u1, _mwu_exact_p(n1, n2, int(round(u1))), "exact")

    n = n1 + n2
    tie_factor = 1.0 - float(np.sum(counts**3 - counts)) / float(n**3 - n)
    if tie_factor <= 0.0:
        # every pooled value identical: the ranks carry no information
        return TestResult(u1, 1.0, "normal_approx:degenerate")
    sd = math.sqrt(tie_factor * n1 * n2 * (n + 1) / 12.0)
    diff = u1 - n1 * n2 / 2.0
    z = (diff - 0.5 * float(np.sign(diff))) / sd
    return TestResult(u1, min(1.0, 2.0 * _norm_sf(abs(z))), "normal_approx")


# Scholz-Stephens critical table for the standardized 2-sample statistic:
# significance levels and interpolation coefficients b0 + b1/sqrt(m) + b2/m
# with m = k - 1 = 1.
_AD_SIG = np.array([0.25, 0.10, 0.05, 0.025, 0.01, 0.005, 0.001])
_AD_B0 = np.array([0.675, 1.281, 1.645, 1.960, 2.326, 2.573, 3.085])
_AD_B1 = np.array([-0.245, 0.250, 0.678, 1.149, 1.822, 2.364, 3.615])
_AD_B2 = np.array([-0.105, -0.305, -0.362, -0.391, -0.396, -0.345, -0.154])
_AD_CRIT = _AD_B0 + _AD_B1 + _AD_B2
_AD_LOGP = np.polyfit(_AD_CRIT, np.log(_AD_SIG), 2)

AD_P_FLOOR = 0.001
AD_P_CEILING = 0.25


def _ad_statistic(x: np.ndarray, y: np.ndarray) -> float:
    """Standardized 2-sample Anderson-Darling statistic, midrank tie handling."""
    n = np.array([x.size, y.size], dtype=np.float64)
    big_n = float(n.sum())
    pooled = np.sort(np.concatenate([x, y]))
    distinct = np.unique(pooled)
    left = pooled.searchsorted(distinct, side="left")
    lj = pooled.searchsorted(distinct, side="right") - left
    bj = left + lj / 2.0

    a2 = 0.0
    for sample, ni in ((np.sort(x), float(x.size)), (np.sort(y), float(y.size))):
        right = sample.searchsorted(distinct, side="right").astype(np.float64)
        fij = right - sample.searchsorted(distinct, side="left")
        mij = right - fij / 2.0
        inner = lj / big_n * (big_n * mij - bj * ni) ** 2 / (bj * (big_n - bj) - big_n * lj / 4.0)
        a2 += float(inner.sum()) / ni
    a2 *= (big_n - 1.0) / big_n

    k = 2
    h_cap = float((1.0 / n).sum())
    harmonic = np.cumsum(1.0 / np.arange(1, big_n))  # H_1 .. H_{N-1}
    h = float(harmonic[-1])
    # g = sum_{i<j<N} 1 / ((N - i) * j)
    g = float(np.sum((h - harmonic[: int(big_n) - 2]) / np.arange(big_n - 1, 1, -1)))
    a = (4 * g - 6) * (k - 1) + (10 - 6 * g) * h_cap
    b = (2 * g - 4) * k**2 + 8 * h * k + (2 * g - 14 * h - 4) * h_cap - 8 * h + 4 * g - 6
    c = (6 * h + 2 * g - 2) * k**2 + (4 * h - 4 * g + 6) * k + (2 * h - 6) * h_cap + 4 * h
    d = (2 * h + 6) * k**2 - 4 * h * k
    sigmasq = (a * big_n**3 + b * big_n**2 + c * big_n + d) / (
        (big_n - 1.0) * (big_n - 2.0) * (big_n - 3.0)
    )
    return float((a2 - (k - 1)) / math.sqrt(sigmasq))


def anderson_darling_2s(xs, ys) -> TestResult:
    """Two-sample Anderson-Darling test (Scholz-Stephens form, k = 2).

    The p-value interpolates the standard critical-value table and is
    clamped to [0.001, 0.25] outside its range, with the clamp recorded in
    ``method``.
    """
    x = _clean_sample(xs, "first")
    y = _clean_sample(ys, "second")
    if x.size < 5 or y.size < 5:
        raise ValueError(f"each sample needs >= 5 values, got {x.size} and {y.size}")
    if np.unique(np.concatenate([x, y])).size == 1:
        # all pooled values identical: nothing to compare
        return TestResult(float("nan"), AD_P_CEILING, "table_interp:degenerate")
    stat = _ad_statistic(x, y)
    if stat < _AD_CRIT[0]:
        return TestResult(stat, AD_P_CEILING, "table_interp:clamped_high")
    if stat > _AD_CRIT[-1]:
        return TestResult(stat, AD_P_FLOOR, "table_interp:clamped_low")
    p = float(np.exp(np.polyval(_AD_LOGP, stat)))
    return TestResult(stat, min(max(p, AD_P_FLOOR), AD_P_CEILING), "table_interp")


def benjamini_hochberg(pvals, alpha: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Step-up FDR correction.

    Returns (adjusted, reject) in the input order, with
    adjusted_(i) = min_{j>=i}(p_(j) * m / j) capped at 1 and
    reject = adjusted <= alpha.
    """
    p = np.asarray(pvals, dtype=np.float64).ravel()
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    m = p.size
    if m == 0:
        return np.empty(0), np.empty(0, dtype=bool)
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum(1.0, np.minimum.accumulate(scaled[::-1])[::-1])
    out = np.empty(m, dtype=np.float64)
    out[order] = adjusted
    return out, out <= alpha
