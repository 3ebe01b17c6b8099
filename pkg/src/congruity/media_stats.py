"""Score-distribution comparison between media groups.

Empirical CDFs, Welch's two-sample t-test with a two-sided p-value, and
Cohen's d. The Student-t tail probability is computed from the regularized
incomplete beta function evaluated by a continued fraction, so the module
has no dependency on an external statistics library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EmpiricalCDF:
    """Right-continuous ECDF sampled at the distinct score values."""

    thresholds: tuple[float, ...]
    cumulative_probs: tuple[float, ...]


@dataclass(frozen=True)
class GroupComparison:
    group_a_name: str
    group_b_name: str
    n_a: int
    n_b: int
    mean_a: float
    mean_b: float
    t_statistic: float
    degrees_freedom: float
    p_value: float
    cohens_d: float


def empirical_cdf(scores) -> EmpiricalCDF:
    """P(x) = (#scores <= x)/n at each distinct score; final prob is 1."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empirical_cdf requires at least one score")
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores must be finite")
    values, counts = np.unique(arr, return_counts=True)
    probs = np.cumsum(counts) / arr.size
    return EmpiricalCDF(tuple(values.tolist()), tuple(probs.tolist()))


def _beta_continued_fraction(a: float, b: float, x: float, rel_tol: float = 1e-10) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        # Even step.
        numer = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numer * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numer / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        # Odd step.
        numer = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numer * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numer / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < rel_tol:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if x < 0.0 or x > 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # Use the expansion that converges fastest on each side of the mean.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T_df| >= |t|) via the incomplete-beta identity."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def two_sample_t(
    scores_a,
    scores_b,
    group_a_name: str = "a",
    group_b_name: str = "b",
) -> GroupComparison:
    """Welch's unequal-variance t-test, two-sided.

    Degenerate inputs where both groups have zero variance raise unless
    the means are also equal, in which case t=0 and p=1 (no evidence of a
    difference, and no infinities to poison report serialization).
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least 2 values")
    mean_a, mean_b = float(a.mean()), float(b.mean())
    var_a, var_b = float(a.var(ddof=1)), float(b.var(ddof=1))
    sq_a, sq_b = var_a / a.size, var_b / b.size

    if sq_a + sq_b == 0.0:
        if mean_a != mean_b:
            raise ValueError("both groups have zero variance but different means")
        return GroupComparison(
            group_a_name, group_b_name, a.size, b.size, mean_a, mean_b,
            t_statistic=0.0, degrees_freedom=float(a.size + b.size - 2),
            p_value=1.0, cohens_d=0.0,
        )

    t = (mean_a - mean_b) / math.sqrt(sq_a + sq_b)
    df = (sq_a + sq_b) ** 2 / (sq_a**2 / (a.size - 1) + sq_b**2 / (b.size - 1))
    return GroupComparison(
        group_a_name, group_b_name, a.size, b.size, mean_a, mean_b,
        t_statistic=t, degrees_freedom=df,
        p_value=student_t_two_sided_p(t, df),
        cohens_d=cohens_d(a, b),
    )


def cohens_d(scores_a, scores_b) -> float:
    """Standardized mean difference with the pooled (n-1) standard deviation."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least 2 values")
    pooled_var = ((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / (
        a.size + b.size - 2
    )
    if pooled_var <= 0.0:
        raise ValueError("pooled variance is zero; effect size undefined")
    return float((a.mean() - b.mean()) / math.sqrt(pooled_var))
