"""Small statistics helpers used by the experiments."""
from __future__ import annotations

import numpy as np
from scipy import stats


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov distance and p-value."""
    res = stats.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return float(res.statistic), float(res.pvalue)


def count_histogram(x, top: int = 10) -> np.ndarray:
    """Empirical law on ``{0, .., top}`` with everything >= top lumped into the last cell."""
    x = np.minimum(np.asarray(x, dtype=np.int64), top)
    if x.size == 0:
        return np.zeros(top + 1)
    return np.bincount(x, minlength=top + 1) / x.size


def tv_distance(a, b, top: int = 10) -> float:
    return 0.5 * float(np.abs(count_histogram(a, top) - count_histogram(b, top)).sum())


def tv_from_laws(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def ols_slope(x, y) -> tuple[float, float]:
    """Least-squares slope and intercept."""
    slope, icpt = np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)
    return float(slope), float(icpt)


def bootstrap_ci(values, rng: np.random.Generator, reps: int = 2000, level: float = 0.95):
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float("nan"), float("nan")
    idx = rng.integers(0, v.size, size=(reps, v.size))
    means = v[idx].mean(axis=1)
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()) if v.size else float("nan"), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def log_grid(lo: float, hi: float, points: int = 40) -> np.ndarray:
    """Distinct integers spread evenly in log scale over ``[lo, hi]``."""
    g = np.unique(np.round(np.geomspace(lo, hi, points)).astype(np.int64))
    return g[(g >= lo) & (g <= hi)]
