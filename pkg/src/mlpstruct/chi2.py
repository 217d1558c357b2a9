"""Chi-square distribution helpers.

``chi2_ppf`` starts from the Wilson-Hilferty cube-root normal approximation
and polishes it with safeguarded Newton steps on the regularized lower
incomplete gamma function, giving close to machine precision for any df.
"""

from __future__ import annotations

import math
from functools import lru_cache
from statistics import NormalDist

_EPS = 1e-15


def _gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) (Numerical Recipes style)."""
    if x <= 0.0:
        return 0.0
    log_pref = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        # series
        term = 1.0 / a
        total = term
        n = a
        for _ in range(100000):
            n += 1.0
            term *= x / n
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        return min(1.0, total * math.exp(log_pref))
    # continued fraction for Q(a, x), modified Lentz
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 100000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return max(0.0, 1.0 - math.exp(log_pref) * h)


def chi2_cdf(x: float, df: float) -> float:
    return _gammainc_lower(df / 2.0, x / 2.0)


def _chi2_pdf(x: float, df: float) -> float:
    k = df / 2.0
    return math.exp((k - 1.0) * math.log(x) - x / 2.0 - k * math.log(2.0) - math.lgamma(k))


def wilson_hilferty(q: float, df: float) -> float:
    z = NormalDist().inv_cdf(q)
    t = 2.0 / (9.0 * df)
    return df * max(1.0 - t + z * math.sqrt(t), 0.0) ** 3


@lru_cache(maxsize=256)
def chi2_ppf(q: float, df: float) -> float:
    """Quantile of the chi-square distribution with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return math.inf
    x = wilson_hilferty(q, df)
    lo, hi = 0.0, max(2.0 * x, df + 40.0 * math.sqrt(df) + 100.0)
    while chi2_cdf(hi, df) < q:
        hi *= 2.0
    if not lo < x < hi:
        x = 0.5 * (lo + hi)
    for _ in range(200):
        f = chi2_cdf(x, df) - q
        if f > 0:
            hi = x
        else:
            lo = x
        pdf = _chi2_pdf(x, df) if x > 0 else 0.0
        step_ok = pdf > 0
        if step_ok:
            x_new = x - f / pdf
            step_ok = lo < x_new < hi
        if not step_ok:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-14 * abs(x_new) or hi - lo <= 1e-300:
            return x_new
        x = x_new
    return x
