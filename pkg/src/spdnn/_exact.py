"""Exact evaluation of rational powers when the inputs allow it."""

from __future__ import annotations

import math
from fractions import Fraction


def _int_root(n: int, q: int):
    """Return r with r**q == n, or None."""
    if n < 0:
        return None
    r = round(n ** (1.0 / q))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand ** q == n:
            return cand
    return None


def rational_power(base, exponent, max_den: int = 64) -> float:
    """``base ** exponent`` computed exactly when ``base`` is a perfect power.

    ``exponent`` is snapped to a fraction with denominator at most
    ``max_den`` only if that fraction reproduces it to double precision;
    otherwise the plain float power is returned.
    """
    x = float(exponent)
    frac = Fraction(x).limit_denominator(max_den)
    if float(frac) != x:
        return float(base) ** x
    if isinstance(base, float) and not base.is_integer():
        return float(base) ** x
    b = Fraction(base)
    if b.denominator != 1:
        return float(base) ** x
    root = _int_root(int(b), frac.denominator)
    if root is None:
        return float(base) ** x
    return float(Fraction(root) ** frac.numerator)


def ceil_power_root(v: Fraction, k: float) -> int:
    """Smallest integer r >= 1 with ``r ** k >= v`` (exact when k is integral)."""
    if v <= 1:
        return 1
    exact = float(k).is_integer()

    def ge(r):
        if exact:
            return Fraction(r) ** int(k) >= v
        return r ** k >= float(v)

    r = max(1, math.ceil(float(v) ** (1.0 / k)))
    while r > 1 and ge(r - 1):
        r -= 1
    while not ge(r):
        r += 1
    return r
