# envguard/services/intervals.py
"""
Closed rational intervals, boxes, interval evaluation of terms and three-valued
(Kleene) evaluation of formulas over a box.

Endpoints are exact Fractions, so no outward rounding is needed. Atom bounds
are sharpened by pinning variables in which the atom is monotone on the box
(sign of the interval-evaluated partial derivative) to the worst endpoint.
"""

from __future__ import annotations
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

from envguard.errors import DivisionByZero, UnboundVariable
from envguard.kernel.formulas import (
    And,
    Bottom,
    Compare,
    Formula,
    Iff,
    Implies,
    Not,
    Or,
    Top,
)
from envguard.kernel.terms import Add, Const, Div, Mul, Neg, Pow, Sub, Term, Var, differentiate, term_variables


@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        object.__setattr__(self, "lo", Fraction(self.lo))
        object.__setattr__(self, "hi", Fraction(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x) -> "Interval":
        return cls(x, x)

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def mid(self) -> Fraction:
        return (self.lo + self.hi) / 2

    def is_point(self) -> bool:
        return self.lo == self.hi

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi

    def contains_zero(self) -> bool:
        return self.lo <= 0 <= self.hi

    def magnitude(self) -> Fraction:
        return max(abs(self.lo), abs(self.hi))

    def mignitude(self) -> Fraction:
        """Least absolute value over the interval."""
        if self.contains_zero():
            return Fraction(0)
        return min(abs(self.lo), abs(self.hi))

    def intersect(self, other: "Interval") -> Optional["Interval"]:
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else None

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def __sub__(self, other: "Interval") -> "Interval":
        return Interval(self.lo - other.hi, self.hi - other.lo)

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other: "Interval") -> "Interval":
        p = (self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi)
        return Interval(min(p), max(p))

    def reciprocal(self) -> "Interval":
        if self.contains_zero():
            raise DivisionByZero(self)
        return Interval(1 / self.hi, 1 / self.lo)

    def __truediv__(self, other: "Interval") -> "Interval":
        return self * other.reciprocal()

    def __pow__(self, n: int) -> "Interval":
        if n == 0:
            return Interval.point(1)
        if n < 0:
            return (self ** (-n)).reciprocal()
        a, b = self.lo ** n, self.hi ** n
        if n % 2 == 1:
            return Interval(a, b)
        if self.contains_zero():
            return Interval(0, max(a, b))
        return Interval(min(a, b), max(a, b))

    def __str__(self) -> str:
        return f"[{self.lo}, {self.hi}]"


# -----------------------------
# Boxes
# -----------------------------
Box = Dict[str, Interval]


def box_center(box: Mapping[str, Interval]) -> Dict[str, Fraction]:
    return {x: iv.mid for x, iv in box.items()}


def box_corners(box: Mapping[str, Interval], limit: int = 1024) -> Iterator[Dict[str, Fraction]]:
    names = sorted(box)
    count = 0
    for ends in product(*((box[x].lo, box[x].hi) for x in names)):
        yield dict(zip(names, ends))
        count += 1
        if count >= limit:
            return


def widest(box: Mapping[str, Interval]) -> Optional[str]:
    best = None
    for x in sorted(box):
        if best is None or box[x].width > box[best].width:
            best = x
    return best


def split_box(box: Mapping[str, Interval], x: str) -> Tuple[Box, Box]:
    iv = box[x]
    left, right = dict(box), dict(box)
    left[x] = Interval(iv.lo, iv.mid)
    right[x] = Interval(iv.mid, iv.hi)
    return left, right


# -----------------------------
# Terms over intervals
# -----------------------------
def interval_term(t: Term, box: Mapping[str, Interval]) -> Interval:
    if isinstance(t, Const):
        return Interval.point(t.value)
    if isinstance(t, Var):
        try:
            return box[t.name]
        except KeyError:
            raise UnboundVariable(t.name) from None
    if isinstance(t, Neg):
        return -interval_term(t.arg, box)
    if isinstance(t, Add):
        return interval_term(t.left, box) + interval_term(t.right, box)
    if isinstance(t, Sub):
        return interval_term(t.left, box) - interval_term(t.right, box)
    if isinstance(t, Mul):
        return interval_term(t.left, box) * interval_term(t.right, box)
    if isinstance(t, Div):
        den = interval_term(t.right, box)
        if den.contains_zero():
            raise DivisionByZero(t)
        return interval_term(t.left, box) / den
    if isinstance(t, Pow):
        base = interval_term(t.base, box)
        if t.exponent < 0 and base.contains_zero():
            raise DivisionByZero(t)
        return base ** t.exponent
    raise TypeError(f"not a term: {t!r}")


@lru_cache(maxsize=4096)
def _derivative(t: Term, x: str) -> Term:
    return differentiate(t, x)


def _pinned_bound(t: Term, box: Mapping[str, Interval], lower: bool) -> Fraction:
    """Lower (or upper) bound of t on the box after pinning monotone variables."""
    pinned = dict(box)
    changed = True
    while changed:
        changed = False
        for x in sorted(term_variables(t)):
            iv = pinned.get(x)
            if iv is None or iv.is_point():
                continue
            try:
                d = interval_term(_derivative(t, x), pinned)
            except DivisionByZero:
                continue
            if d.lo >= 0:
                pinned[x] = Interval.point(iv.lo if lower else iv.hi)
            elif d.hi <= 0:
                pinned[x] = Interval.point(iv.hi if lower else iv.lo)
            else:
                continue
            changed = True
    iv = interval_term(t, pinned)
    return iv.lo if lower else iv.hi


def refined_interval(t: Term, box: Mapping[str, Interval]) -> Interval:
    """Enclosure of t on the box, sharpened by monotonicity. May raise DivisionByZero."""
    plain = interval_term(t, box)
    lo = max(plain.lo, _pinned_bound(t, box, lower=True))
    hi = min(plain.hi, _pinned_bound(t, box, lower=False))
    return Interval(lo, hi) if lo <= hi else plain


# -----------------------------
# Three-valued evaluation
# -----------------------------
def _atom_value(f: Compare, box: Mapping[str, Interval], refine: bool) -> Optional[bool]:
    if f.op in ("<=", "<"):
        t = Sub(f.right, f.left)
    else:
        t = Sub(f.left, f.right)
    try:
        iv = refined_interval(t, box) if refine else interval_term(t, box)
    except DivisionByZero:
        return None
    if f.op in (">=", "<="):
        return True if iv.lo >= 0 else (False if iv.hi < 0 else None)
    if f.op in (">", "<"):
        return True if iv.lo > 0 else (False if iv.hi <= 0 else None)
    if f.op == "=":
        if iv.lo == iv.hi == 0:
            return True
        return False if (iv.lo > 0 or iv.hi < 0) else None
    # !=
    if iv.lo > 0 or iv.hi < 0:
        return True
    return False if iv.lo == iv.hi == 0 else None


def _not(v: Optional[bool]) -> Optional[bool]:
    return None if v is None else not v


def kleene(f: Formula, box: Mapping[str, Interval], refine: bool = True) -> Optional[bool]:
    """True/False if f has that value everywhere on the box, None if undecided."""
    if isinstance(f, Compare):
        return _atom_value(f, box, refine)
    if isinstance(f, Top):
        return True
    if isinstance(f, Bottom):
        return False
    if isinstance(f, Not):
        return _not(kleene(f.arg, box, refine))
    if isinstance(f, And):
        out: Optional[bool] = True
        for a in f.args:
            v = kleene(a, box, refine)
            if v is False:
                return False
            if v is None:
                out = None
        return out
    if isinstance(f, Or):
        out = False
        for a in f.args:
            v = kleene(a, box, refine)
            if v is True:
                return True
            if v is None:
                out = None
        return out
    if isinstance(f, Implies):
        a = kleene(f.left, box, refine)
        if a is False:
            return True
        b = kleene(f.right, box, refine)
        if b is True:
            return True
        if a is True and b is False:
            return False
        return None
    if isinstance(f, Iff):
        a, b = kleene(f.left, box, refine), kleene(f.right, box, refine)
        if a is None or b is None:
            return None
        return a == b
    raise TypeError(f"cannot evaluate {f!r} over a box")


def undecided_slack(f: Formula, box: Mapping[str, Interval]) -> Fraction:
    """Total enclosure width of atoms that are still undecided on the box."""
    total = Fraction(0)
    seen: List[Compare] = []

    def walk(g):
        nonlocal total
        if isinstance(g, Compare):
            if g in seen:
                return
            seen.append(g)
            if _atom_value(g, box, refine=False) is None:
                try:
                    total += interval_term(Sub(g.left, g.right), box).width
                except DivisionByZero:
                    total += sum((iv.width for iv in box.values()), Fraction(0))
        elif isinstance(g, Not):
            walk(g.arg)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                walk(a)
        elif isinstance(g, (Implies, Iff)):
            walk(g.left)
            walk(g.right)

    walk(f)
    return total
