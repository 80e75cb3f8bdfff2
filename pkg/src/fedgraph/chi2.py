"""Chi-square tail quantiles via the regularized incomplete gamma function.

Implemented in-repo (series plus continued fraction, then a bracketed
Newton/bisection inversion) so that thresholds are available for arbitrary
degrees of freedom and per-test levels such as alpha / |E|.
"""

from __future__ import annotations

import math

__all__ = ["regularized_gamma_p", "chi2_cdf", "chi2_sf", "chi2_quantile"]

_MAX_ITER = 500
_EPS = 1e-16


def _gamma_p_series(a: float, x: float) -> float:
    """Lower regularized gamma P(a, x) by its power series; best for x < a + 1."""
    term = 1.0 / a
    total = term
    denom = a
    for _ in range(_MAX_ITER):
        denom += 1.0
        term *= x / denom
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    log_prefactor = a * math.log(x) - x - math.lgamma(a)
    return total * math.exp(log_prefactor)


def _gamma_q_cf(a: float, x: float) -> float:
    """Upper regularized gamma Q(a, x) by Lentz's continued fraction; x >= a + 1."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
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
    log_prefactor = a * math.log(x) - x - math.lgamma(a)
    return h * math.exp(log_prefactor)


def regularized_gamma_p(a: float, x: float) -> float:
    """Lower regularized incomplete gamma function P(a, x)."""
    if a <= 0.0:
        raise ValueError(f"shape parameter must be positive, got {a}")
    if x < 0.0:
        raise ValueError(f"argument must be nonnegative, got {x}")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_p_series(a, x)
    return 1.0 - _gamma_q_cf(a, x)


def chi2_cdf(x: float, dof: int) -> float:
    """P(chi-square with ``dof`` degrees of freedom <= x)."""
    if dof < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {dof}")
    if x <= 0.0:
        return 0.0
    return regularized_gamma_p(dof / 2.0, x / 2.0)


def chi2_sf(x: float, dof: int) -> float:
    """Upper tail P(chi-square with ``dof`` degrees of freedom > x)."""
    if dof < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {dof}")
    if x <= 0.0:
        return 1.0
    a = dof / 2.0
    half = x / 2.0
    if half < a + 1.0:
        return 1.0 - _gamma_p_series(a, half)
    return _gamma_q_cf(a, half)


def _chi2_pdf(x: float, dof: int) -> float:
    a = dof / 2.0
    log_pdf = (a - 1.0) * math.log(x) - x / 2.0 - a * math.log(2.0) - math.lgamma(a)
    return math.exp(log_pdf)


def chi2_quantile(dof: int, upper_tail: float) -> float:
    """Value x with P(chi-square_dof > x) = upper_tail.

    Bracketed Newton iteration on the survival function with bisection
    fallback; converges to 1e-10 relative accuracy.
    """
    if dof < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {dof}")
    if not 0.0 < upper_tail < 1.0:
        raise ValueError(f"upper-tail probability must lie in (0, 1), got {upper_tail}")

    lo, hi = 0.0, float(dof)
    while chi2_sf(hi, dof) > upper_tail:
        lo = hi
        hi *= 2.0
        if hi > 1e308:
            raise ValueError("quantile bracket overflow")

    x = 0.5 * (lo + hi)
    for _ in range(200):
        diff = chi2_sf(x, dof) - upper_tail
        if diff > 0.0:
            lo = x
        else:
            hi = x
        pdf = _chi2_pdf(x, dof)
        step_ok = pdf > 0.0
        if step_ok:
            x_new = x + diff / pdf  # sf' = -pdf, Newton on sf(x) - q
            step_ok = lo < x_new < hi
        if not step_ok:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-10 * max(1.0, abs(x_new)):
            return x_new
        x = x_new
    return x
