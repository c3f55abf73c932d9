# envguard/fixedpoint/analysis.py
"""
Range and roundoff analysis of straight-line programs.

One forward pass computes, per id, the interval of its exact real value over
the domain and a bound on |quantized - exact|. Every value is truncated
(floor) onto its 2^-frac grid. An op pays a truncation term only when the
exact result of its quantized arguments is finer than the destination grid,
and then at most 2^-frac - 2^-g for a result on a 2^-g grid; g is tracked
per quantized value as `grid` (fractional bits actually used).

Loads carry no error: the program is compared against exact evaluation at the
quantized inputs. Their range is widened downwards by one step so that the
quantized input still lies in it.
"""

from __future__ import annotations
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Mapping, Optional

from envguard.errors import DenominatorMayVanish, DivisionByZero, RangeOverflow, UnsupportedOp
from envguard.fixedpoint.formats import FixedFormat, format_with_int_bits
from envguard.fixedpoint.program import Op, StraightLineProgram, input_box
from envguard.services.intervals import Interval
from envguard.utils.rationals import pow2


@dataclass(frozen=True)
class Analysis:
    ranges: Mapping[str, Interval]
    errors: Mapping[str, Fraction]
    total_error: Fraction


@dataclass(frozen=True)
class CostWeights:
    mul: Fraction = Fraction(1)
    add: Fraction = Fraction(1, 8)
    div: Fraction = Fraction(1)


def dyadic_bits(c: Fraction) -> Optional[int]:
    """Fractional bits needed to represent c exactly; None if c is not dyadic."""
    d = Fraction(c).denominator
    if d & (d - 1):
        return None
    return d.bit_length() - 1


# -----------------------------
# Forward pass
# -----------------------------
class _State:
    def __init__(self):
        self.ranges: Dict[str, Interval] = {}
        self.errors: Dict[str, Fraction] = {}
        self.grid: Dict[str, int] = {}
        self.formats: Dict[str, FixedFormat] = {}


def _exact_range(op: Op, st: _State, domain: Mapping[str, Interval], fmt: FixedFormat) -> Interval:
    a = [st.ranges[i] for i in op.args]
    if op.kind == "load":
        iv = domain[op.name]
        return Interval(iv.lo - fmt.step, iv.hi)
    if op.kind == "const":
        return Interval.point(op.value)
    if op.kind == "add":
        return a[0] + a[1]
    if op.kind == "sub":
        return a[0] - a[1]
    if op.kind == "mul":
        return a[0] * a[1]
    if op.kind == "max0":
        return Interval(max(a[0].lo, Fraction(0)), max(a[0].hi, Fraction(0)))
    if op.kind == "recip":
        try:
            return a[0].reciprocal()
        except DivisionByZero:
            raise DenominatorMayVanish(f"{op.dest}: denominator range {a[0]} contains 0") from None
    raise UnsupportedOp(f"no range rule for {op.kind}")


def _exact_grid(op: Op, st: _State) -> Optional[int]:
    """Fractional bits of the exact result of the quantized arguments; None if not dyadic."""
    g = [st.grid[i] for i in op.args]
    if op.kind == "const":
        return dyadic_bits(op.value)
    if op.kind in ("add", "sub"):
        return max(g)
    if op.kind == "mul":
        return g[0] + g[1]
    if op.kind == "max0":
        return g[0]
    return None  # recip


def _propagated(op: Op, st: _State) -> Fraction:
    """Error of the exact result computed on quantized arguments, before truncation."""
    e = [st.errors[i] for i in op.args]
    r = [st.ranges[i] for i in op.args]
    if op.kind in ("load", "const"):
        return Fraction(0)
    if op.kind in ("add", "sub"):
        return e[0] + e[1]
    if op.kind == "mul":
        return r[0].magnitude() * e[1] + r[1].magnitude() * e[0] + e[0] * e[1]
    if op.kind == "max0":
        return e[0]
    if op.kind == "recip":
        m = r[0].mignitude()
        if m <= e[0]:
            raise RangeOverflow(op.dest, f"(denominator error {e[0]} reaches its least magnitude {m})")
        return e[0] / (m * (m - e[0]))
    raise UnsupportedOp(f"no error rule for {op.kind}")


def _fits(fmt: FixedFormat, iv: Interval, err: Fraction) -> bool:
    return fmt.lo <= iv.lo - err and iv.hi + err <= fmt.hi


def _place(op: Op, st: _State, domain: Mapping[str, Interval], fmt: FixedFormat) -> bool:
    """Record range/error/grid of op under fmt; False if the value does not fit."""
    iv = _exact_range(op, st, domain, fmt)
    err = _propagated(op, st)
    exact = _exact_grid(op, st)
    if op.kind == "load":
        grid = fmt.frac
    elif exact is not None and exact <= fmt.frac:
        grid = exact
    else:
        grid = fmt.frac
        # floor from a 2^-exact grid onto 2^-frac loses at most step - 2^-exact
        err += fmt.step if exact is None else fmt.step - pow2(-exact)
    if not _fits(fmt, iv, err):
        return False
    st.ranges[op.dest], st.errors[op.dest], st.grid[op.dest] = iv, err, grid
    st.formats[op.dest] = fmt
    return True


def _run(
    prog: StraightLineProgram,
    domain: Mapping[str, Interval],
    choose: Callable[[Op, _State], FixedFormat],
) -> _State:
    input_box(prog, domain)
    st = _State()
    for op in prog.ops:
        if op.kind == "store":
            src = op.args[0]
            st.ranges[op.dest] = st.ranges[src]
            st.errors[op.dest] = st.errors[src]
            st.grid[op.dest] = st.grid[src]
            st.formats[op.dest] = st.formats[src]
            continue
        choose(op, st)
    return st


def _total(prog: StraightLineProgram, st: _State) -> Fraction:
    return max((st.errors[op.dest] for op in prog.ops if op.kind == "store"), default=Fraction(0))


# -----------------------------
# Public API
# -----------------------------
def analyze(prog: StraightLineProgram, domain: Mapping[str, Interval]) -> Analysis:
    """Ranges and error bounds under the formats already assigned to `prog`."""

    def fixed(op: Op, st: _State) -> FixedFormat:
        try:
            fmt = prog.formats[op.dest]
        except KeyError:
            raise UnsupportedOp(f"no format assigned to {op.dest}") from None
        if not _place(op, st, domain, fmt):
            raise RangeOverflow(op.dest, str(fmt))
        return fmt

    st = _run(prog, domain, fixed)
    return Analysis(st.ranges, st.errors, _total(prog, st))


def assign_formats(
    prog: StraightLineProgram,
    domain: Mapping[str, Interval],
    widths: Mapping[str, int],
) -> StraightLineProgram:
    """
    Give every id the format of its width with the fewest integer bits such
    that its range widened by its error bound fits. Stores reuse the format of
    their argument.
    """

    def smallest(op: Op, st: _State) -> FixedFormat:
        try:
            q = widths[op.dest]
        except KeyError:
            raise UnsupportedOp(f"no width given for {op.dest}") from None
        for int_bits in range(q):
            fmt = format_with_int_bits(q, int_bits)
            if _place(op, st, domain, fmt):
                return fmt
        raise RangeOverflow(op.dest, f"at width {q}")

    st = _run(prog, domain, smallest)
    return prog.with_formats(st.formats)


def cost(prog: StraightLineProgram, weights: Optional[CostWeights] = None) -> Fraction:
    """Area model: multipliers cost the product of their operand widths, adders the wider operand."""
    weights = weights or CostWeights()
    total = Fraction(0)
    for op in prog.ops:
        q = [prog.formats[i].width for i in op.args]
        if op.kind == "mul":
            total += weights.mul * q[0] * q[1]
        elif op.kind in ("add", "sub"):
            total += weights.add * max(q)
        elif op.kind == "max0":
            total += weights.add * q[0]
        elif op.kind == "recip":
            total += weights.div * q[0] * prog.formats[op.dest].width
    return total


def uniform_widths(prog: StraightLineProgram, width: int) -> Dict[str, int]:
    return {ident: width for ident in prog.ids()}
