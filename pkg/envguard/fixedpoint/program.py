# envguard/fixedpoint/program.py
"""
Straight-line SSA programs and the lowering of implementations into them.

Networks unroll neuron by neuron (one const per weight and bias, one mul and
one add per weight, max0 for ReLU). Closed forms lower term by term; a
division by a constant becomes a multiplication by its reciprocal and a
division by a non-constant affine term goes through a guarded `recip`, which
is only allowed when the denominator's range over the domain excludes 0.
"""

from __future__ import annotations
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from envguard.errors import DenominatorMayVanish, DimensionMismatch, DivisionByZero, UnsupportedOp
from envguard.fixedpoint.formats import FixedFormat
from envguard.hybrid.implementations import ClosedForm, NetworkImpl, nn_out_name
from envguard.kernel.terms import (
    Add,
    Const,
    Div,
    Mul,
    Neg,
    Pow,
    Sub,
    Term,
    Var,
    fold_constants,
    is_linear,
)
from envguard.nnet.network import ReluNetwork
from envguard.services.intervals import Interval, interval_term

OP_KINDS = ("load", "const", "add", "sub", "mul", "max0", "recip", "store")


@dataclass(frozen=True)
class Op:
    kind: str
    dest: str
    args: Tuple[str, ...] = ()
    value: Optional[Fraction] = None  # const
    name: str = ""  # load: input name, store: output name
    layer: int = 0

    def __post_init__(self):
        if self.kind not in OP_KINDS:
            raise UnsupportedOp(f"unknown op kind {self.kind!r}")


@dataclass(frozen=True)
class StraightLineProgram:
    ops: Tuple[Op, ...]
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    formats: Mapping[str, FixedFormat] = field(default_factory=dict)

    def with_formats(self, formats: Mapping[str, FixedFormat]) -> "StraightLineProgram":
        return replace(self, formats=dict(formats))

    def ids(self) -> List[str]:
        return [op.dest for op in self.ops if op.kind != "store"]

    def tunable_ids(self) -> List[str]:
        return [op.dest for op in self.ops if op.kind not in ("store", "load")]

    def layers(self) -> Dict[int, List[str]]:
        out: Dict[int, List[str]] = {}
        for op in self.ops:
            if op.kind not in ("store", "load"):
                out.setdefault(op.layer, []).append(op.dest)
        return dict(sorted(out.items()))

    def format_of(self, ident: str) -> FixedFormat:
        return self.formats[ident]

    def count(self, kind: str) -> int:
        return sum(1 for op in self.ops if op.kind == kind)

    def evaluate_exact(self, x: Sequence) -> List[Fraction]:
        """Real-valued semantics (exact rationals, no quantization)."""
        if len(x) != len(self.inputs):
            raise DimensionMismatch(f"program takes {len(self.inputs)} inputs, got {len(x)}")
        given = dict(zip(self.inputs, (Fraction(v) for v in x)))
        env: Dict[str, Fraction] = {}
        out: Dict[str, Fraction] = {}
        for op in self.ops:
            a = [env[i] for i in op.args]
            if op.kind == "load":
                env[op.dest] = given[op.name]
            elif op.kind == "const":
                env[op.dest] = op.value
            elif op.kind == "add":
                env[op.dest] = a[0] + a[1]
            elif op.kind == "sub":
                env[op.dest] = a[0] - a[1]
            elif op.kind == "mul":
                env[op.dest] = a[0] * a[1]
            elif op.kind == "max0":
                env[op.dest] = max(a[0], Fraction(0))
            elif op.kind == "recip":
                if a[0] == 0:
                    raise DivisionByZero(op.dest)
                env[op.dest] = 1 / a[0]
            else:
                out[op.name] = a[0]
        return [out[name] for name in self.outputs]


class _Builder:
    def __init__(self):
        self.ops: List[Op] = []

    def emit(self, kind: str, args: Tuple[str, ...] = (), layer: int = 0, **kw) -> str:
        dest = f"t{len(self.ops)}"
        self.ops.append(Op(kind, dest, args, layer=layer, **kw))
        return dest


# -----------------------------
# Networks
# -----------------------------
def lower_network(
    net: ReluNetwork,
    input_names: Optional[Sequence[str]] = None,
    output_names: Optional[Sequence[str]] = None,
) -> StraightLineProgram:
    input_names = list(input_names or [f"x{i}" for i in range(net.input_dim)])
    output_names = list(output_names or [nn_out_name(i) for i in range(net.output_dim)])
    if len(input_names) != net.input_dim or len(output_names) != net.output_dim:
        raise DimensionMismatch("input/output names do not match the network dimensions")
    b = _Builder()
    values = [b.emit("load", name=x) for x in input_names]
    for k, layer in enumerate(net.layers, start=1):
        nxt = []
        for row, bias in zip(layer.weights, layer.biases):
            acc = b.emit("const", value=Fraction(bias), layer=k)
            for w, x in zip(row, values):
                c = b.emit("const", value=Fraction(w), layer=k)
                m = b.emit("mul", (c, x), layer=k)
                acc = b.emit("add", (acc, m), layer=k)
            if layer.activation == "relu":
                acc = b.emit("max0", (acc,), layer=k)
            nxt.append(acc)
        values = nxt
    for name, v in zip(output_names, values):
        b.emit("store", (v,), name=name, layer=len(net.layers) + 1)
    return StraightLineProgram(tuple(b.ops), tuple(input_names), tuple(output_names))


# -----------------------------
# Closed forms
# -----------------------------
class _TermLowering:
    def __init__(self, builder: _Builder, loads: Mapping[str, str], domain: Mapping[str, Interval]):
        self.b = builder
        self.loads = loads
        self.domain = domain
        self.memo: Dict[Term, Tuple[str, int]] = {}

    def const(self, value: Fraction) -> Tuple[str, int]:
        key = Const(Fraction(value))
        if key not in self.memo:
            self.memo[key] = (self.b.emit("const", value=Fraction(value), layer=1), 1)
        return self.memo[key]

    def lower(self, t: Term) -> Tuple[str, int]:
        """(id, depth) of the value of t."""
        if t in self.memo:
            return self.memo[t]
        if isinstance(t, Const):
            return self.const(t.value)
        if isinstance(t, Var):
            try:
                return self.loads[t.name], 0
            except KeyError:
                raise UnsupportedOp(f"free variable {t.name} is not an input") from None
        out = self._lower(t)
        self.memo[t] = out
        return out

    def _binary(self, kind: str, left: Term, right: Term) -> Tuple[str, int]:
        a, da = self.lower(left)
        c, dc = self.lower(right)
        depth = max(da, dc) + 1
        return self.b.emit(kind, (a, c), layer=depth), depth

    def _lower(self, t: Term) -> Tuple[str, int]:
        if isinstance(t, Add):
            return self._binary("add", t.left, t.right)
        if isinstance(t, Sub):
            return self._binary("sub", t.left, t.right)
        if isinstance(t, Mul):
            return self._binary("mul", t.left, t.right)
        if isinstance(t, Neg):
            return self._binary("sub", Const(Fraction(0)), t.arg)
        if isinstance(t, Pow):
            if t.exponent < 1:
                raise UnsupportedOp(f"power with exponent {t.exponent}")
            acc = t.base
            for _ in range(t.exponent - 1):
                acc = Mul(acc, t.base)
            return self.lower(acc)
        if isinstance(t, Div):
            return self._division(t)
        raise UnsupportedOp(f"cannot lower {t!r}")

    def _division(self, t: Div) -> Tuple[str, int]:
        den = fold_constants(t.right)
        if isinstance(den, Const):
            if den.value == 0:
                raise DenominatorMayVanish(f"constant zero denominator in {t}")
            return self._binary("mul", t.left, Const(1 / den.value))
        if not is_linear(den):
            raise UnsupportedOp(f"non-affine denominator in {t}")
        try:
            iv = interval_term(den, self.domain)
        except DivisionByZero:
            raise DenominatorMayVanish(str(t)) from None
        if iv.contains_zero():
            raise DenominatorMayVanish(f"denominator of {t} ranges over {iv}")
        d, depth = self.lower(den)
        r = self.b.emit("recip", (d,), layer=depth + 1)
        if fold_constants(t.left) == Const(Fraction(1)):
            return r, depth + 1
        a, da = self.lower(t.left)
        depth = max(da, depth + 1) + 1
        return self.b.emit("mul", (a, r), layer=depth), depth


def lower_closed_form(impl: ClosedForm, domain: Mapping[str, Interval]) -> StraightLineProgram:
    inputs = impl.input_variables()
    missing = [x for x in inputs if x not in domain]
    if missing:
        raise UnsupportedOp(f"domain does not bound {', '.join(missing)}")
    b = _Builder()
    loads = {x: b.emit("load", name=x) for x in inputs}
    lowering = _TermLowering(b, loads, domain)
    results = [lowering.lower(fold_constants(t)) for t in impl.outputs.values()]
    top = max((d for _, d in results), default=0) + 1
    for name, (ident, _) in zip(impl.outputs, results):
        b.emit("store", (ident,), name=name, layer=top)
    return StraightLineProgram(tuple(b.ops), tuple(inputs), tuple(impl.outputs))


def lower(
    target: Union[ReluNetwork, ClosedForm, NetworkImpl],
    domain: Mapping[str, Interval],
) -> StraightLineProgram:
    if isinstance(target, ClosedForm):
        return lower_closed_form(target, domain)
    if isinstance(target, NetworkImpl):
        missing = [x for x in target.input_vars if x not in domain]
        if missing:
            raise UnsupportedOp(f"domain does not bound {', '.join(missing)}")
        return lower_network(target.net, target.input_vars)
    return lower_network(target)


def input_box(prog: StraightLineProgram, domain: Mapping[str, Interval]) -> Dict[str, Interval]:
    missing = [x for x in prog.inputs if x not in domain]
    if missing:
        raise UnsupportedOp(f"domain does not bound {', '.join(missing)}")
    return {x: domain[x] for x in prog.inputs}


