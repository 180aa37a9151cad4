"""Regularized incomplete gamma function.

Series expansion below ``x < a + 1``, Lentz continued fraction above,
following the usual Numerical Recipes split. Kept in-repo because the
ball map divides by these values and needs the scaled series form
(``P(a, x) / x**a``) that library routines do not expose.
"""

import math
import sys

EPS = 1e-15
TINY = sys.float_info.min / sys.float_info.epsilon
MAX_ITER = 500


class ConvergenceError(ArithmeticError):
    pass


def _check(a, x):
    if not a > 0.0:
        raise ValueError(f"shape parameter must be positive, got a={a}")
    if not x >= 0.0:
        raise ValueError(f"argument must be non-negative, got x={x}")


def scaled_series(a, x):
    """Return ``(S, dS/dx)`` with ``S(x) = P(a, x) / x**a``.

    ``S`` is smooth and strictly positive at ``x = 0`` where it equals
    ``1 / Gamma(a + 1)``; the derivative avoids the cancellation the
    unscaled form suffers near the origin.
    """
    _check(a, x)
    term = 1.0
    total = 1.0
    dtotal = 0.0
    ap = a
    for n in range(1, MAX_ITER):
        ap += 1.0
        dterm = n * term / ap  # d/dx of x**n / ((a+1)...(a+n)) is n/x times it
        term *= x / ap
        total += term
        dtotal += dterm
        if abs(term) < abs(total) * EPS and abs(dterm) <= abs(dtotal) * EPS:
            break
    else:
        raise ConvergenceError(f"series did not converge for a={a}, x={x}")
    pref = math.exp(-x - math.lgamma(a + 1.0))
    s = pref * total
    return s, pref * dtotal - s


def _series(a, x):
    if x == 0.0:
        return 0.0
    s, _ = scaled_series(a, x)
    return s * math.exp(a * math.log(x))


def _continued_fraction(a, x):
    """Upper regularized gamma ``Q(a, x)`` by modified Lentz."""
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
            break
    else:
        raise ConvergenceError(f"continued fraction did not converge for a={a}, x={x}")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc(a, x):
    """Regularized lower incomplete gamma ``P(a, x)``."""
    _check(a, x)
    if x < a + 1.0:
        return _series(a, x)
    return 1.0 - _continued_fraction(a, x)


def gammaincc(a, x):
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    _check(a, x)
    if x < a + 1.0:
        return 1.0 - _series(a, x)
    return _continued_fraction(a, x)
