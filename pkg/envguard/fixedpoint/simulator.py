# envguard/fixedpoint/simulator.py
"""
Bit-exact integer simulation of a program with assigned formats.

Each id holds an integer n meaning n * 2^-frac. Rescaling to fewer fractional
bits is an arithmetic right shift (floor); products are formed at full width
and narrowed once. A value outside its format's integer range is an error,
never a wraparound.
"""

from __future__ import annotations
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Sequence

from envguard.errors import DimensionMismatch, SimOverflow, UnsupportedOp
from envguard.fixedpoint.program import StraightLineProgram


@dataclass(frozen=True)
class SimulationResult:
    outputs: List[Fraction]
    exact: List[Fraction]
    realized_error: Fraction


def rescale(n: int, src: int, dst: int) -> int:
    """n at `src` fractional bits expressed at `dst` bits, truncating toward -inf."""
    if dst >= src:
        return n << (dst - src)
    return n >> (src - dst)


def run_integer(prog: StraightLineProgram, x: Sequence) -> Dict[str, int]:
    """Integer value of every id (stores keyed by output name)."""
    if len(x) != len(prog.inputs):
        raise DimensionMismatch(f"program takes {len(prog.inputs)} inputs, got {len(x)}")
    given = dict(zip(prog.inputs, (Fraction(v) for v in x)))
    fmt = prog.formats
    env: Dict[str, int] = {}
    out: Dict[str, int] = {}
    for op in prog.ops:
        if op.kind == "store":
            out[op.name] = env[op.args[0]]
            continue
        f = fmt[op.dest]
        a = [env[i] for i in op.args]
        p = [fmt[i].frac for i in op.args]
        if op.kind == "load":
            n = f.quantize(given[op.name])
        elif op.kind == "const":
            n = f.quantize(op.value)
        elif op.kind in ("add", "sub"):
            top = max(p)
            u, v = rescale(a[0], p[0], top), rescale(a[1], p[1], top)
            n = rescale(u + v if op.kind == "add" else u - v, top, f.frac)
        elif op.kind == "mul":
            n = rescale(a[0] * a[1], p[0] + p[1], f.frac)
        elif op.kind == "max0":
            n = rescale(max(a[0], 0), p[0], f.frac)
        elif op.kind == "recip":
            if a[0] == 0:
                raise SimOverflow(op.dest, 0)
            n = (1 << (p[0] + f.frac)) // a[0]
        else:
            raise UnsupportedOp(f"cannot simulate {op.kind}")
        if not f.fits(n):
            raise SimOverflow(op.dest, n)
        env[op.dest] = n
    return out


def simulate(prog: StraightLineProgram, x: Sequence) -> SimulationResult:
    """Fixed-point outputs, exact outputs at the quantized inputs, and their largest gap."""
    ints = run_integer(prog, x)
    store_src = {op.name: op.args[0] for op in prog.ops if op.kind == "store"}
    outputs = [prog.formats[store_src[name]].value(ints[name]) for name in prog.outputs]
    loads = {op.name: op.dest for op in prog.ops if op.kind == "load"}
    quantized = [
        prog.formats[loads[name]].value(prog.formats[loads[name]].quantize(v)) if name in loads else Fraction(v)
        for name, v in zip(prog.inputs, x)
    ]
    exact = prog.evaluate_exact(quantized)
    realized = max((abs(a - b) for a, b in zip(outputs, exact)), default=Fraction(0))
    return SimulationResult(outputs, exact, realized)
