"""Regularized incomplete gamma function and the chi-squared upper tail."""

from __future__ import annotations

import math

EPS = 1e-16
TINY = 1e-300
MAX_ITER = 100_000


def _prefactor(a, x):
    # x**a * exp(-x) / Gamma(a), in logs to survive large arguments
    return math.exp(a * math.log(x) - x - math.lgamma(a))


def _lower_series(a, x):
    """P(a, x) by its power series; converges quickly for x < a + 1."""
    ap = a
    term = total = 1.0 / a
    for _ in range(MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * EPS:
            return total * _prefactor(a, x)
    raise ArithmeticError(f"gamma series did not converge (a={a}, x={x})")


def _upper_fraction(a, x):
    """Q(a, x) by Legendre's continued fraction (modified Lentz), x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / TINY
    d = 1.0 / b
    h = d
    for i in range(1, MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < TINY:
            d = TINY
        c = b + an / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            return h * _prefactor(a, x)
    raise ArithmeticError(f"gamma continued fraction did not converge (a={a}, x={x})")


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = Gamma(a, x) / Gamma(a)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _lower_series(a, x))
    return min(1.0, _upper_fraction(a, x))


def gammainc(a: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(a, x)``."""
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, _lower_series(a, x))
    return max(0.0, 1.0 - _upper_fraction(a, x))


def chi2_sf(x: float, dof: int) -> float:
    """Upper-tail probability of the chi-squared distribution."""
    if dof < 1:
        raise ValueError("dof must be at least 1")
    if x <= 0:
        return 1.0
    return gammaincc(dof / 2.0, x / 2.0)
