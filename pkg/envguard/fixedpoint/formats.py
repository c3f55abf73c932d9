# envguard/fixedpoint/formats.py
from __future__ import annotations
from dataclasses import dataclass
from fractions import Fraction

from envguard.utils.rationals import pow2

MAX_WIDTH = 64


@dataclass(frozen=True)
class FixedFormat:
    """
    Signed (s=1) or unsigned (s=0) fixed-point format with `width` bits in
    total, `frac` of them after the binary point. Values are n * 2^-frac for
    an integer n of `width` bits.
    """

    width: int
    frac: int
    signed: int = 1

    def __post_init__(self):
        if not 1 <= self.width <= MAX_WIDTH:
            raise ValueError(f"width {self.width} outside 1..{MAX_WIDTH}")
        if not 0 <= self.frac <= self.width - self.signed:
            raise ValueError(f"binary point {self.frac} outside 0..{self.width - self.signed}")

    @property
    def int_bits(self) -> int:
        return self.width - self.signed - self.frac

    @property
    def step(self) -> Fraction:
        return pow2(-self.frac)

    @property
    def int_min(self) -> int:
        return -(1 << (self.width - 1)) if self.signed else 0

    @property
    def int_max(self) -> int:
        return (1 << (self.width - self.signed)) - 1

    @property
    def lo(self) -> Fraction:
        return self.int_min * self.step

    @property
    def hi(self) -> Fraction:
        return self.int_max * self.step

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi

    def fits(self, n: int) -> bool:
        return self.int_min <= n <= self.int_max

    def quantize(self, x) -> int:
        """Integer representation of x truncated (floor) onto the grid."""
        return (Fraction(x) * (1 << self.frac)).__floor__()

    def value(self, n: int) -> Fraction:
        return Fraction(n, 1 << self.frac)

    def __str__(self) -> str:
        return f"{'s' if self.signed else 'u'}{self.width}.{self.frac}"


def format_with_int_bits(width: int, int_bits: int) -> FixedFormat:
    return FixedFormat(width, width - 1 - int_bits)
