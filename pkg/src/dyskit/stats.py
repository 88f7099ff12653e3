"""Nonparametric statistics and collinearity diagnostics."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy import stats as sps
from scipy.stats import rankdata

VIF_CAP = 1e12


class UndefinedCoefficientError(ValueError):
    pass


class CorrelationResult(NamedTuple):
    coefficient: float
    p_value: float
    n: int


class KruskalResult(NamedTuple):
    statistic: float
    df: int
    p_value: float


class VifResult(NamedTuple):
    value: float
    capped: bool


def _tie_sums(x: np.ndarray) -> tuple[float, float, float]:
    """Sums of t(t-1), t(t-1)(t-2), t(t-1)(2t+5) over tie groups."""
    _, counts = np.unique(x, return_counts=True)
    t = counts.astype(float)
    return float(np.sum(t * (t - 1))), float(np.sum(t * (t - 1) * (t - 2))), float(np.sum(t * (t - 1) * (2 * t + 5)))


def _count_swaps(seq: np.ndarray) -> int:
    """Number of strictly decreasing pairs (i < j, seq[i] > seq[j]) via merge sort."""
    seq = list(seq)
    swaps = 0
    width = 1
    n = len(seq)
    buf = seq[:]
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if seq[j] < seq[i]:
                    buf[k] = seq[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = seq[i]
                    i += 1
                k += 1
            buf[k:hi] = seq[i:mid] + seq[j:hi]
        seq, buf = buf, seq
        width *= 2
    return swaps


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Kendall tau-b with a normal-approximation p-value.

    Counts use Knight's O(n log n) scheme. Raises
    UndefinedCoefficientError if either input is constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D of equal length")
    n = x.size
    if n < 2:
        raise ValueError("need at least two observations")

    n0 = n * (n - 1) // 2
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]

    def tied_pairs(*cols):
        same = np.ones(n - 1, dtype=bool)
        for c in cols:
            same &= c[1:] == c[:-1]
        # Runs of equal consecutive entries -> sum of t(t-1)/2.
        total, run = 0, 1
        for s in same:
            if s:
                run += 1
            else:
                total += run * (run - 1) // 2
                run = 1
        return total + run * (run - 1) // 2

    n1 = tied_pairs(xs)
    n3 = tied_pairs(xs, ys)
    swaps = _count_swaps(ys)
    n2 = tied_pairs(np.sort(y))
    if n1 == n0 or n2 == n0:
        raise UndefinedCoefficientError("tau is undefined for a constant input")
    # concordant - discordant
    s = n0 - n1 - n2 + n3 - 2 * swaps
    tau = s / np.sqrt((n0 - n1) * (n0 - n2))
    tau = float(np.clip(tau, -1.0, 1.0))

    vx1, vx2, vx3 = _tie_sums(x)
    vy1, vy2, vy3 = _tie_sums(y)
    var = (n * (n - 1) * (2 * n + 5) - vx3 - vy3) / 18.0
    var += vx1 * vy1 / (2.0 * n * (n - 1))
    if n > 2:
        var += vx2 * vy2 / (9.0 * n * (n - 1) * (n - 2))
    if var <= 0:
        p = 1.0
    else:
        z = s / np.sqrt(var)
        p = float(min(1.0, 2.0 * sps.norm.sf(abs(z))))
    return CorrelationResult(tau, p, n)


def spearman_matrix(table: pd.DataFrame) -> pd.DataFrame:
    """Pairwise-complete Spearman correlation matrix (NaN = MISSING)."""
    values = table.to_numpy(dtype=float)
    cols = list(table.columns)
    k = len(cols)
    out = np.full((k, k), np.nan)
    present = ~np.isnan(values)
    for i in range(k):
        if present[:, i].sum() >= 2:
            out[i, i] = 1.0
        for j in range(i + 1, k):
            both = present[:, i] & present[:, j]
            if both.sum() < 2:
                continue
            a = rankdata(values[both, i])
            b = rankdata(values[both, j])
            a = a - a.mean()
            b = b - b.mean()
            denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
            if denom == 0:
                continue
            out[i, j] = out[j, i] = float(np.clip(np.dot(a, b) / denom, -1, 1))
    return pd.DataFrame(out, index=cols, columns=cols)


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> KruskalResult:
    """Kruskal-Wallis H with tie correction; p from chi-square with k-1 df."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(g.size == 0 for g in groups):
        raise ValueError("need at least two non-empty groups")
    allv = np.concatenate(groups)
    n = allv.size
    if n < 3:
        raise ValueError("need at least three observations in total")
    df = len(groups) - 1
    ranks = rankdata(allv)
    _, counts = np.unique(allv, return_counts=True)
    ties = 1.0 - np.sum(counts**3 - counts) / (n**3 - n)
    if ties == 0:
        return KruskalResult(0.0, df, 1.0)
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start : start + g.size]
        h += r.sum() ** 2 / g.size
        start += g.size
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    h = max(h / ties, 0.0)
    return KruskalResult(float(h), df, float(sps.chi2.sf(h, df)))


def vif(table: pd.DataFrame, feature: str) -> VifResult:
    """Variance inflation factor 1/(1-R^2) of ``feature`` on all other columns.

    Uses complete-case rows. Rank-deficient designs and perfect fits return
    the cap with ``capped=True``.
    """
    data = table.dropna()
    others = [c for c in data.columns if c != feature]
    if len(others) < 2:
        raise ValueError("VIF needs at least two other features")
    if len(data) < len(data.columns) + 1:
        raise ValueError("too few complete rows for VIF")
    y = data[feature].to_numpy(dtype=float)
    X = np.column_stack([np.ones(len(data)), data[others].to_numpy(dtype=float)])
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot == 0:
        return VifResult(VIF_CAP, True)
    r2 = 1.0 - ss_res / ss_tot
    if rank < X.shape[1] and r2 > 1 - 1e-9 or r2 >= 1.0 - 1.0 / VIF_CAP:
        return VifResult(VIF_CAP, True)
    # A rank-deficient design that still explains part of y is legitimate.
    return VifResult(float(min(1.0 / (1.0 - r2), VIF_CAP)), False)


def vif_all(table: pd.DataFrame) -> dict[str, float]:
    return {c: vif(table, c).value for c in table.columns}


def descriptive(values: Sequence[float]) -> dict[str, float]:
    """Mean, median, population std, min, max, skewness and excess kurtosis.

    Skewness and kurtosis are NaN when the variance is zero.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("need at least one value")
    mean = float(x.mean())
    d = x - mean
    m2 = float(np.mean(d**2))
    out = {
        "mean": mean,
        "median": float(np.median(x)),
        "std": float(np.sqrt(m2)),
        "min": float(x.min()),
        "max": float(x.max()),
    }
    if m2 > 0:
        out["skewness"] = float(np.mean(d**3) / m2**1.5)
        out["kurtosis"] = float(np.mean(d**4) / m2**2 - 3.0)
    else:
        out["skewness"] = out["kurtosis"] = float("nan")
    return out
