# envguard/kernel/terms.py
"""
Real-arithmetic terms over exact rationals.

Terms are immutable trees. Arithmetic operators on Term build new trees, so
`Var("p") - Const(1) * Var("v")` is a Term, not a number.
"""

from __future__ import annotations
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, Mapping, Tuple, Union

from envguard.errors import DivisionByZero, NonlinearAtom, UnboundVariable

Valuation = Dict[str, Fraction]
Number = Union[int, Fraction]


class Term:
    """Base class for term nodes."""

    __slots__ = ()

    def __add__(self, other): return Add(self, as_term(other))
    def __radd__(self, other): return Add(as_term(other), self)
    def __sub__(self, other): return Sub(self, as_term(other))
    def __rsub__(self, other): return Sub(as_term(other), self)
    def __mul__(self, other): return Mul(self, as_term(other))
    def __rmul__(self, other): return Mul(as_term(other), self)
    def __truediv__(self, other): return Div(self, as_term(other))
    def __rtruediv__(self, other): return Div(as_term(other), self)
    def __neg__(self): return Neg(self)
    def __pow__(self, n: int): return Pow(self, int(n))

    def __str__(self) -> str:
        from envguard.kernel.syntax import print_term
        return print_term(self)


@dataclass(frozen=True, eq=True, repr=True)
class Const(Term):
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Var(Term):
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("variable names must be nonempty")


@dataclass(frozen=True)
class Neg(Term):
    arg: Term


@dataclass(frozen=True)
class Add(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Sub(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Mul(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Div(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Pow(Term):
    base: Term
    exponent: int


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def as_term(x) -> Term:
    if isinstance(x, Term):
        return x
    if isinstance(x, (int, Fraction)) and not isinstance(x, bool):
        return Const(Fraction(x))
    if isinstance(x, str):
        return Var(x)
    raise TypeError(f"cannot build a term from {x!r}")


def var(name: str) -> Var:
    return Var(name)


def const(value: Number) -> Const:
    return Const(Fraction(value))


# -----------------------------
# Evaluation
# -----------------------------
def evaluate_term(t: Term, s: Mapping[str, Fraction]) -> Fraction:
    if isinstance(t, Const):
        return t.value
    if isinstance(t, Var):
        try:
            return Fraction(s[t.name])
        except KeyError:
            raise UnboundVariable(t.name) from None
    if isinstance(t, Neg):
        return -evaluate_term(t.arg, s)
    if isinstance(t, Add):
        return evaluate_term(t.left, s) + evaluate_term(t.right, s)
    if isinstance(t, Sub):
        return evaluate_term(t.left, s) - evaluate_term(t.right, s)
    if isinstance(t, Mul):
        return evaluate_term(t.left, s) * evaluate_term(t.right, s)
    if isinstance(t, Div):
        num = evaluate_term(t.left, s)
        den = evaluate_term(t.right, s)
        if den == 0:
            raise DivisionByZero(t)
        return num / den
    if isinstance(t, Pow):
        base = evaluate_term(t.base, s)
        if base == 0 and t.exponent < 0:
            raise DivisionByZero(t)
        return base ** t.exponent
    raise TypeError(f"not a term: {t!r}")


# -----------------------------
# Variables and substitution
# -----------------------------
def term_variables(t: Term) -> FrozenSet[str]:
    out = set()
    stack = [t]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Neg):
            stack.append(node.arg)
        elif isinstance(node, Pow):
            stack.append(node.base)
        elif isinstance(node, (Add, Sub, Mul, Div)):
            stack.append(node.left)
            stack.append(node.right)
    return frozenset(out)


def substitute_term(t: Term, mapping: Mapping[str, Term]) -> Term:
    """Simultaneous substitution of variables by terms."""
    if not mapping:
        return t
    if isinstance(t, Var):
        return mapping.get(t.name, t)
    if isinstance(t, Const):
        return t
    if isinstance(t, Neg):
        return Neg(substitute_term(t.arg, mapping))
    if isinstance(t, Pow):
        return Pow(substitute_term(t.base, mapping), t.exponent)
    return type(t)(substitute_term(t.left, mapping), substitute_term(t.right, mapping))


# -----------------------------
# Constant folding
# -----------------------------
def fold_constants(t: Term) -> Term:
    """Replace every variable-free subterm by its value; nothing else."""
    if isinstance(t, (Const, Var)):
        return t
    if isinstance(t, Neg):
        a = fold_constants(t.arg)
        if isinstance(a, Const):
            return Const(-a.value)
        return Neg(a)
    if isinstance(t, Pow):
        b = fold_constants(t.base)
        if isinstance(b, Const) and not (b.value == 0 and t.exponent < 0):
            return Const(b.value ** t.exponent)
        return Pow(b, t.exponent)
    a = fold_constants(t.left)
    b = fold_constants(t.right)
    if isinstance(a, Const) and isinstance(b, Const):
        if isinstance(t, Add):
            return Const(a.value + b.value)
        if isinstance(t, Sub):
            return Const(a.value - b.value)
        if isinstance(t, Mul):
            return Const(a.value * b.value)
        if isinstance(t, Div) and b.value != 0:
            return Const(a.value / b.value)
    return type(t)(a, b)


# -----------------------------
# Linear forms
# -----------------------------
LinearForm = Tuple[Dict[str, Fraction], Fraction]


def as_linear(t: Term) -> LinearForm:
    """
    Coefficients and constant of a term that is affine in its variables.
    Raises NonlinearAtom for products of variables, division by a non-constant,
    or powers of non-constant bases.
    """
    if isinstance(t, Const):
        return {}, t.value
    if isinstance(t, Var):
        return {t.name: Fraction(1)}, Fraction(0)
    if isinstance(t, Neg):
        c, k = as_linear(t.arg)
        return {x: -a for x, a in c.items()}, -k
    if isinstance(t, (Add, Sub)):
        c1, k1 = as_linear(t.left)
        c2, k2 = as_linear(t.right)
        sign = 1 if isinstance(t, Add) else -1
        out = dict(c1)
        for x, a in c2.items():
            out[x] = out.get(x, Fraction(0)) + sign * a
        return {x: a for x, a in out.items() if a != 0}, k1 + sign * k2
    if isinstance(t, Mul):
        c1, k1 = as_linear(t.left)
        c2, k2 = as_linear(t.right)
        if c1 and c2:
            raise NonlinearAtom(t)
        if not c1:
            return {x: k1 * a for x, a in c2.items() if k1 * a != 0}, k1 * k2
        return {x: k2 * a for x, a in c1.items() if k2 * a != 0}, k1 * k2
    if isinstance(t, Div):
        c2, k2 = as_linear(t.right)
        if c2:
            raise NonlinearAtom(t)
        if k2 == 0:
            raise DivisionByZero(t)
        c1, k1 = as_linear(t.left)
        return {x: a / k2 for x, a in c1.items()}, k1 / k2
    if isinstance(t, Pow):
        if t.exponent == 0:
            return {}, Fraction(1)
        if t.exponent == 1:
            return as_linear(t.base)
        c, k = as_linear(t.base)
        if c:
            raise NonlinearAtom(t)
        if k == 0 and t.exponent < 0:
            raise DivisionByZero(t)
        return {}, k ** t.exponent
    raise TypeError(f"not a term: {t!r}")


def is_linear(t: Term) -> bool:
    try:
        as_linear(t)
    except (NonlinearAtom, DivisionByZero):
        return False
    return True


def linear_term(coeffs: Mapping[str, Fraction], constant: Fraction = Fraction(0)) -> Term:
    """Canonical term for sum(c*x) + k, variables in sorted order."""
    out: Term = None
    for name in sorted(coeffs):
        c = Fraction(coeffs[name])
        if c == 0:
            continue
        if c == 1:
            piece, negative = Var(name), False
        elif c == -1:
            piece, negative = Var(name), True
        elif c < 0:
            piece, negative = Mul(Const(-c), Var(name)), True
        else:
            piece, negative = Mul(Const(c), Var(name)), False
        if out is None:
            out = Neg(piece) if negative else piece
        else:
            out = Sub(out, piece) if negative else Add(out, piece)
    constant = Fraction(constant)
    if out is None:
        return Const(constant)
    if constant > 0:
        return Add(out, Const(constant))
    if constant < 0:
        return Sub(out, Const(-constant))
    return out


# -----------------------------
# Differentiation
# -----------------------------
def differentiate(t: Term, x: str) -> Term:
    """Symbolic partial derivative d t / d x (constant-folded)."""
    return fold_constants(_d(t, x))


def _d(t: Term, x: str) -> Term:
    if isinstance(t, Const):
        return ZERO
    if isinstance(t, Var):
        return ONE if t.name == x else ZERO
    if x not in term_variables(t):
        return ZERO
    if isinstance(t, Neg):
        return Neg(_d(t.arg, x))
    if isinstance(t, Add):
        return Add(_d(t.left, x), _d(t.right, x))
    if isinstance(t, Sub):
        return Sub(_d(t.left, x), _d(t.right, x))
    if isinstance(t, Mul):
        return Add(Mul(_d(t.left, x), t.right), Mul(t.left, _d(t.right, x)))
    if isinstance(t, Div):
        num = Sub(Mul(_d(t.left, x), t.right), Mul(t.left, _d(t.right, x)))
        return Div(num, Pow(t.right, 2))
    if isinstance(t, Pow):
        n = t.exponent
        if n == 0:
            return ZERO
        return Mul(Mul(Const(n), Pow(t.base, n - 1)), _d(t.base, x))
    raise TypeError(f"not a term: {t!r}")
