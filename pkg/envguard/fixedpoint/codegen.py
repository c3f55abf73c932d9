# envguard/fixedpoint/codegen.py
"""
Integer three-address code for a formatted program (`fxp v1`, described in
docs/fxp_format.md) and the reader that turns it back into a program.

Every line declares one value with its format; `shift k` is the number of
fractional bits dropped (k > 0, arithmetic right shift) or added (k < 0,
left shift) when the full-width result is narrowed to the declared format.
"""

from __future__ import annotations
from typing import Dict, List

from envguard.errors import FormatError, UnsupportedOp
from envguard.fixedpoint.formats import FixedFormat
from envguard.fixedpoint.program import Op, StraightLineProgram

HEADER = "fxp v1"


def _full_frac(op: Op, formats) -> int:
    p = [formats[i].frac for i in op.args]
    if op.kind in ("add", "sub"):
        return max(p)
    if op.kind == "mul":
        return p[0] + p[1]
    if op.kind == "max0":
        return p[0]
    raise UnsupportedOp(op.kind)


def emit(prog: StraightLineProgram) -> str:
    """Deterministic source text; identical programs give identical bytes."""
    lines: List[str] = [HEADER]
    fm = prog.formats
    for op in prog.ops:
        if op.kind == "store":
            lines.append(f"out {op.name} {op.args[0]}")
            continue
        f = fm[op.dest]
        if op.kind == "load":
            lines.append(f"in {op.dest} {f} {op.name}")
        elif op.kind == "const":
            lines.append(f"const {op.dest} {f} {f.quantize(op.value)}")
        elif op.kind == "recip":
            k = fm[op.args[0]].frac + f.frac
            lines.append(f"recip {op.dest} {f} {op.args[0]} shift {k}")
        else:
            k = _full_frac(op, fm) - f.frac
            lines.append(f"{op.kind} {op.dest} {f} {' '.join(op.args)} shift {k}")
    return "\n".join(lines) + "\n"


# -----------------------------
# Reader
# -----------------------------
def _format(word: str, line: int) -> FixedFormat:
    try:
        sign, rest = word[0], word[1:]
        width, frac = rest.split(".")
        if sign not in "su":
            raise ValueError(word)
        return FixedFormat(int(width), int(frac), 1 if sign == "s" else 0)
    except (ValueError, IndexError):
        raise FormatError(line, f"bad format {word!r}") from None


def _int(word: str, line: int, what: str) -> int:
    try:
        return int(word)
    except ValueError:
        raise FormatError(line, f"bad integer {word!r} for {what}") from None


def parse_emitted(text: str) -> StraightLineProgram:
    """Program with formats from `fxp v1` text; shifts must agree with the formats."""
    rows = [(n, raw.split()) for n, raw in enumerate(text.splitlines(), start=1)]
    rows = [(n, w) for n, w in rows if w]
    if not rows or rows[0][1] != HEADER.split():
        raise FormatError(rows[0][0] if rows else 1, f"expected header {HEADER!r}")

    ops: List[Op] = []
    formats: Dict[str, FixedFormat] = {}
    inputs: List[str] = []
    outputs: List[str] = []

    def known(ident: str, line: int) -> str:
        if ident not in formats:
            raise FormatError(line, f"{ident} used before it is defined")
        return ident

    for line, w in rows[1:]:
        kind = w[0]
        if kind == "out":
            if len(w) != 3:
                raise FormatError(line, "expected: out <name> <id>")
            ops.append(Op("store", f"out_{w[1]}", (known(w[2], line),), name=w[1]))
            outputs.append(w[1])
            continue
        if len(w) < 4:
            raise FormatError(line, f"truncated {kind} line")
        dest, fmt = w[1], _format(w[2], line)
        if dest in formats:
            raise FormatError(line, f"{dest} assigned twice")
        if kind == "in":
            op = Op("load", dest, name=w[3])
            inputs.append(w[3])
        elif kind == "const":
            op = Op("const", dest, value=fmt.value(_int(w[3], line, "constant")))
        elif kind in ("add", "sub", "mul", "max0", "recip"):
            arity = 2 if kind in ("add", "sub", "mul") else 1
            if len(w) != 3 + arity + 2 or w[3 + arity] != "shift":
                raise FormatError(line, f"expected: {kind} <id> <format> <args> shift <k>")
            args = tuple(known(a, line) for a in w[3:3 + arity])
            op = Op(kind, dest, args)
            shift = _int(w[-1], line, "shift")
            if kind == "recip":
                expected = formats[args[0]].frac + fmt.frac
            else:
                expected = _full_frac(op, formats) - fmt.frac
            if shift != expected:
                raise FormatError(line, f"shift {shift} disagrees with the formats (expected {expected})")
        else:
            raise FormatError(line, f"unknown instruction {kind!r}")
        formats[dest] = fmt
        ops.append(op)

    for op in ops:
        if op.kind == "store":
            formats[op.dest] = formats[op.args[0]]
    return StraightLineProgram(tuple(ops), tuple(inputs), tuple(outputs), formats)
