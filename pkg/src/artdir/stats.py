"""Paired one-sided t-test, quantile summaries and KDE export.

The Student-t CDF is evaluated through the regularized incomplete beta
function (continued fraction, modified Lentz), so no statistics library is
needed.
"""

from __future__ import annotations

import math
import sys

import numpy as np

from .errors import EmptyTable, LengthMismatch, NonConvergence, TooFewSamples

P_MIN = sys.float_info.min
P_MAX = 1.0 - 2.0**-53
KDE_GRID = 181


def _betacf(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 10000) -> float:
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise NonConvergence("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    lnfront = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lnfront) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lnfront) * _betacf(b, a, 1.0 - x) / b


def t_tail(t: float, df: float) -> float:
    """P(T <= -|t|) for Student's t with ``df`` degrees of freedom."""
    return 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))


def t_cdf(t: float, df: float) -> float:
    tail = t_tail(t, df)
    return tail if t < 0 else 1.0 - tail


def paired_t_statistic(a, b) -> tuple[float, int]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"paired samples differ in length: {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        raise TooFewSamples("paired t-test needs at least two pairs")
    diff = a - b
    sd = float(np.std(diff, ddof=1))
    mean = float(np.mean(diff))
    # spread at the rounding level of the inputs counts as zero variance
    scale = max(float(np.abs(a).max()), float(np.abs(b).max()))
    if sd <= 8.0 * np.finfo(float).eps * scale:
        return (0.0 if mean == 0 else math.copysign(math.inf, mean)), n - 1
    return mean / (sd / math.sqrt(n)), n - 1


def paired_t_test_one_sided(a, b) -> float:
    """p-value for the alternative "mean(a - b) < 0" (``a`` has smaller errors).

    Zero-variance differences (spread within a few ulps of the inputs)
    give 0.5 for a zero mean and otherwise the smallest / largest
    representable probability by sign.

    Raises:
        LengthMismatch: ``a`` and ``b`` differ in length.
        TooFewSamples: fewer than two pairs.
    """
    t, df = paired_t_statistic(a, b)
    if math.isinf(t):
        return P_MIN if t < 0 else P_MAX
    if t == 0.0:
        return 0.5
    tail = t_tail(t, df)
    p = tail if t < 0 else 1.0 - tail
    return min(P_MAX, max(P_MIN, p))


# ---------------------------------------------------------------------------
# summaries


def summarize(errors) -> dict:
    """Median, quartiles (linear interpolation) and 1.5 IQR whiskers."""
    x = np.asarray(errors, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise EmptyTable("no finite errors to summarize")
    q1, med, q3 = (float(v) for v in np.quantile(x, [0.25, 0.5, 0.75], method="linear"))
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    return {
        "n": int(x.size),
        "median": med,
        "q1": q1,
        "q3": q3,
        "iqr": iqr,
        "whisker_fence": [lo_fence, hi_fence],
        "whiskers": [float(inside.min()), float(inside.max())],
        "mean": float(x.mean()),
    }


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    q1, q3 = np.quantile(x, [0.25, 0.75])
    spread = min(sd, (q3 - q1) / 1.34)
    if spread <= 0:
        spread = sd
    return 0.9 * spread * x.size ** (-0.2)


def kde(errors, grid=None) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE on ``grid`` (default 181 points over [0, pi]).

    A zero bandwidth (all values equal) puts the whole mass on the nearest
    grid node.
    """
    x = np.asarray(errors, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise EmptyTable("no finite errors for the KDE")
    grid = np.linspace(0.0, math.pi, KDE_GRID) if grid is None else np.asarray(grid, dtype=float)
    h = silverman_bandwidth(x)
    if h <= 0:
        dens = np.zeros_like(grid)
        step = grid[1] - grid[0]
        dens[int(np.argmin(np.abs(grid - x[0])))] = 1.0 / step
        return grid, dens
    z = (grid[:, None] - x[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * math.sqrt(2.0 * math.pi))
    return grid, dens
