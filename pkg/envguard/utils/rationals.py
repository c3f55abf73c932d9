# envguard/utils/rationals.py
"""
Exact rational helpers. Decimal strings are parsed exactly (never through a
binary float) and rationals are printed as "n" or "n/d".
"""

from __future__ import annotations
from fractions import Fraction
from typing import Union

import numpy as np

RationalLike = Union[int, str, Fraction]


def to_fraction(value: RationalLike) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        if not text:
            raise ValueError("empty rational literal")
        return Fraction(text)
    raise TypeError(f"refusing to convert {type(value).__name__} to an exact rational")


def format_fraction(q: Fraction) -> str:
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def pow2(n: int) -> Fraction:
    return Fraction(2) ** n


def floor_to_grid(x: Fraction, frac_bits: int) -> Fraction:
    """Largest multiple of 2^-frac_bits that is <= x."""
    scale = 1 << frac_bits if frac_bits >= 0 else None
    if scale is None:
        step = Fraction(2) ** (-frac_bits)
        return (x // step) * step
    return Fraction((x * scale).__floor__(), scale)


def sample_rational(rng: np.random.Generator, lo: Fraction, hi: Fraction, max_bits: int = 8) -> Fraction:
    """Random rational in [lo, hi] on a dyadic grid of random resolution."""
    lo, hi = Fraction(lo), Fraction(hi)
    if lo == hi:
        return lo
    bits = int(rng.integers(0, max_bits + 1))
    steps = 1 << bits
    k = int(rng.integers(0, steps + 1))
    return lo + (hi - lo) * Fraction(k, steps)


def nearest_integer_in(lo: Fraction, hi: Fraction, lo_strict: bool = False, hi_strict: bool = False):
    """Integer of least magnitude inside the (possibly half-open) interval, or None."""
    def inside(z: int) -> bool:
        if lo is not None and (z < lo or (lo_strict and z == lo)):
            return False
        if hi is not None and (z > hi or (hi_strict and z == hi)):
            return False
        return True

    if inside(0):
        return 0
    if lo is not None and lo > 0:
        z = lo.__ceil__()
        if z == lo and lo_strict:
            z += 1
        return z if inside(z) else None
    if hi is not None and hi < 0:
        z = hi.__floor__()
        if z == hi and hi_strict:
            z -= 1
        return z if inside(z) else None
    return None
