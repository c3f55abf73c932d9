# envguard/kernel/formulas.py
"""
First-order formulas over real-arithmetic terms, their exact evaluation,
capture-avoiding substitution and normalization.
"""

from __future__ import annotations
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, Iterable, Mapping, Set, Tuple

from envguard.errors import QuantifierPresent
from envguard.kernel.terms import (
    ZERO,
    Const,
    Sub,
    Term,
    Var,
    evaluate_term,
    fold_constants,
    substitute_term,
    term_variables,
)

COMPARISONS = ("<", "<=", "=", "!=", ">=", ">")


class Formula:
    __slots__ = ()

    def __and__(self, other: "Formula") -> "Formula":
        return conj(self, other)

    def __or__(self, other: "Formula") -> "Formula":
        return disj(self, other)

    def __invert__(self) -> "Formula":
        return Not(self)

    def __str__(self) -> str:
        from envguard.kernel.syntax import print_formula
        return print_formula(self)


@dataclass(frozen=True)
class Compare(Formula):
    op: str
    left: Term
    right: Term

    def __post_init__(self):
        if self.op not in COMPARISONS:
            raise ValueError(f"unknown comparison {self.op!r}")


@dataclass(frozen=True)
class Top(Formula):
    pass


@dataclass(frozen=True)
class Bottom(Formula):
    pass


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    args: Tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    args: Tuple[Formula, ...]


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Iff(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula


TRUE = Top()
FALSE = Bottom()


# -----------------------------
# Builders
# -----------------------------
def compare(left, op: str, right) -> Compare:
    from envguard.kernel.terms import as_term
    return Compare(op, as_term(left), as_term(right))


def conj(*parts: Formula) -> Formula:
    """Conjunction that flattens nested And and drops/absorbs constants."""
    flat = []
    for p in parts:
        if isinstance(p, Top):
            continue
        if isinstance(p, Bottom):
            return FALSE
        if isinstance(p, And):
            flat.extend(p.args)
        else:
            flat.append(p)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(*parts: Formula) -> Formula:
    flat = []
    for p in parts:
        if isinstance(p, Bottom):
            continue
        if isinstance(p, Top):
            return TRUE
        if isinstance(p, Or):
            flat.extend(p.args)
        else:
            flat.append(p)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def forall(names: Iterable[str], body: Formula) -> Formula:
    for name in reversed(list(names)):
        body = Forall(name, body)
    return body


def exists(names: Iterable[str], body: Formula) -> Formula:
    for name in reversed(list(names)):
        body = Exists(name, body)
    return body


def conjuncts(f: Formula) -> Tuple[Formula, ...]:
    if isinstance(f, And):
        out = []
        for a in f.args:
            out.extend(conjuncts(a))
        return tuple(out)
    if isinstance(f, Top):
        return ()
    return (f,)


# -----------------------------
# Evaluation
# -----------------------------
def _compare_values(op: str, a: Fraction, b: Fraction) -> bool:
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == ">=":
        return a >= b
    return a > b


def evaluate_formula(f: Formula, s: Mapping[str, Fraction]) -> bool:
    """Classical truth value of a quantifier-free formula under exact arithmetic."""
    if isinstance(f, Compare):
        return _compare_values(f.op, evaluate_term(f.left, s), evaluate_term(f.right, s))
    if isinstance(f, Top):
        return True
    if isinstance(f, Bottom):
        return False
    if isinstance(f, Not):
        return not evaluate_formula(f.arg, s)
    if isinstance(f, And):
        return all(evaluate_formula(a, s) for a in f.args)
    if isinstance(f, Or):
        return any(evaluate_formula(a, s) for a in f.args)
    if isinstance(f, Implies):
        return (not evaluate_formula(f.left, s)) or evaluate_formula(f.right, s)
    if isinstance(f, Iff):
        return evaluate_formula(f.left, s) == evaluate_formula(f.right, s)
    if isinstance(f, (Forall, Exists)):
        raise QuantifierPresent(f)
    raise TypeError(f"not a formula: {f!r}")


def is_quantifier_free(f: Formula) -> bool:
    if isinstance(f, (Forall, Exists)):
        return False
    if isinstance(f, Not):
        return is_quantifier_free(f.arg)
    if isinstance(f, (And, Or)):
        return all(is_quantifier_free(a) for a in f.args)
    if isinstance(f, (Implies, Iff)):
        return is_quantifier_free(f.left) and is_quantifier_free(f.right)
    return True


# -----------------------------
# Free variables
# -----------------------------
def formula_variables(f: Formula) -> FrozenSet[str]:
    """Free variables of a formula."""
    if isinstance(f, Compare):
        return term_variables(f.left) | term_variables(f.right)
    if isinstance(f, (Top, Bottom)):
        return frozenset()
    if isinstance(f, Not):
        return formula_variables(f.arg)
    if isinstance(f, (And, Or)):
        out: Set[str] = set()
        for a in f.args:
            out |= formula_variables(a)
        return frozenset(out)
    if isinstance(f, (Implies, Iff)):
        return formula_variables(f.left) | formula_variables(f.right)
    if isinstance(f, (Forall, Exists)):
        return formula_variables(f.body) - {f.var}
    raise TypeError(f"not a formula: {f!r}")


def free_variables(obj) -> FrozenSet[str]:
    """Free variables of a Term, a Formula, or anything with a free_variables() method."""
    if isinstance(obj, Term):
        return term_variables(obj)
    if isinstance(obj, Formula):
        return formula_variables(obj)
    method = getattr(obj, "free_variables", None)
    if callable(method):
        return frozenset(method())
    raise TypeError(f"no free variables for {type(obj).__name__}")


def all_names(f: Formula) -> FrozenSet[str]:
    """Every name occurring in f, free or bound."""
    if isinstance(f, Compare):
        return term_variables(f.left) | term_variables(f.right)
    if isinstance(f, (Top, Bottom)):
        return frozenset()
    if isinstance(f, Not):
        return all_names(f.arg)
    if isinstance(f, (And, Or)):
        out: Set[str] = set()
        for a in f.args:
            out |= all_names(a)
        return frozenset(out)
    if isinstance(f, (Implies, Iff)):
        return all_names(f.left) | all_names(f.right)
    if isinstance(f, (Forall, Exists)):
        return all_names(f.body) | {f.var}
    raise TypeError(f"not a formula: {f!r}")


def fresh_name(base: str, avoid: Iterable[str], suffix: str = "'") -> str:
    taken = set(avoid)
    name = base + suffix
    while name in taken:
        name += suffix
    return name


# -----------------------------
# Substitution
# -----------------------------
def substitute(f, mapping: Mapping[str, Term]):
    """
    Simultaneous, capture-avoiding substitution. Works on formulas and terms.
    Bound variables that would capture a free variable of an inserted term are
    renamed by appending primes.
    """
    if isinstance(f, Term):
        return substitute_term(f, mapping)
    if not mapping:
        return f
    if isinstance(f, Compare):
        return Compare(f.op, substitute_term(f.left, mapping), substitute_term(f.right, mapping))
    if isinstance(f, (Top, Bottom)):
        return f
    if isinstance(f, Not):
        return Not(substitute(f.arg, mapping))
    if isinstance(f, (And, Or)):
        return type(f)(tuple(substitute(a, mapping) for a in f.args))
    if isinstance(f, (Implies, Iff)):
        return type(f)(substitute(f.left, mapping), substitute(f.right, mapping))
    if isinstance(f, (Forall, Exists)):
        body_fv = formula_variables(f.body)
        inner = {k: v for k, v in mapping.items() if k != f.var and k in body_fv}
        if not inner:
            return f
        incoming: Set[str] = set()
        for t in inner.values():
            incoming |= term_variables(t)
        bound = f.var
        if bound in incoming:
            renamed = fresh_name(bound, incoming | all_names(f.body) | set(inner))
            inner[bound] = Var(renamed)
            bound = renamed
        return type(f)(bound, substitute(f.body, inner))
    raise TypeError(f"not a formula: {f!r}")


def map_terms(f: Formula, fn: Callable[[Term], Term]) -> Formula:
    """Apply fn to both sides of every comparison."""
    if isinstance(f, Compare):
        return Compare(f.op, fn(f.left), fn(f.right))
    if isinstance(f, (Top, Bottom)):
        return f
    if isinstance(f, Not):
        return Not(map_terms(f.arg, fn))
    if isinstance(f, (And, Or)):
        return type(f)(tuple(map_terms(a, fn) for a in f.args))
    if isinstance(f, (Implies, Iff)):
        return type(f)(map_terms(f.left, fn), map_terms(f.right, fn))
    if isinstance(f, (Forall, Exists)):
        return type(f)(f.var, map_terms(f.body, fn))
    raise TypeError(f"not a formula: {f!r}")


def atoms(f: Formula) -> Tuple[Compare, ...]:
    out = []

    def walk(g):
        if isinstance(g, Compare):
            out.append(g)
        elif isinstance(g, Not):
            walk(g.arg)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                walk(a)
        elif isinstance(g, (Implies, Iff)):
            walk(g.left)
            walk(g.right)
        elif isinstance(g, (Forall, Exists)):
            walk(g.body)

    walk(f)
    return tuple(out)


# -----------------------------
# Normalization
# -----------------------------
_FLIP = {"<=": ">=", "<": ">"}


def normalize_atom(f: Compare) -> Formula:
    """Rewrite a comparison to t >= 0, t > 0, t = 0 or t != 0; fold ground atoms."""
    op = f.op
    left, right = f.left, f.right
    if op in _FLIP:
        left, right, op = right, left, _FLIP[op]
    if isinstance(right, Const) and right.value == 0:
        t = fold_constants(left)
    else:
        t = fold_constants(Sub(left, right))
    if isinstance(t, Const):
        return TRUE if _compare_values(op, t.value, Fraction(0)) else FALSE
    return Compare(op, t, ZERO)


def _alpha_rename(f: Formula, taken: Set[str], renaming: Dict[str, str]) -> Formula:
    if isinstance(f, Compare):
        if not renaming:
            return f
        mapping = {k: Var(v) for k, v in renaming.items()}
        return Compare(f.op, substitute_term(f.left, mapping), substitute_term(f.right, mapping))
    if isinstance(f, (Top, Bottom)):
        return f
    if isinstance(f, Not):
        return Not(_alpha_rename(f.arg, taken, renaming))
    if isinstance(f, (And, Or)):
        return type(f)(tuple(_alpha_rename(a, taken, renaming) for a in f.args))
    if isinstance(f, (Implies, Iff)):
        return type(f)(_alpha_rename(f.left, taken, renaming), _alpha_rename(f.right, taken, renaming))
    if isinstance(f, (Forall, Exists)):
        name = f.var
        if name in taken:
            name = fresh_name(name, taken)
        taken.add(name)
        inner = dict(renaming)
        if name != f.var:
            inner[f.var] = name
        else:
            inner.pop(f.var, None)
        return type(f)(name, _alpha_rename(f.body, taken, inner))
    raise TypeError(f"not a formula: {f!r}")


def _sort_key(f: Formula) -> str:
    from envguard.kernel.syntax import print_formula
    return print_formula(f)


def _simplify(f: Formula) -> Formula:
    if isinstance(f, Compare):
        return normalize_atom(f)
    if isinstance(f, (Top, Bottom)):
        return f
    if isinstance(f, Not):
        a = _simplify(f.arg)
        if isinstance(a, Top):
            return FALSE
        if isinstance(a, Bottom):
            return TRUE
        return Not(a)
    if isinstance(f, (And, Or)):
        parts = [_simplify(a) for a in f.args]
        combined = conj(*parts) if isinstance(f, And) else disj(*parts)
        if not isinstance(combined, type(f)):
            return combined
        unique = {}
        for a in combined.args:
            unique.setdefault(_sort_key(a), a)
        if len(unique) == 1:
            return next(iter(unique.values()))
        return type(f)(tuple(unique[k] for k in sorted(unique)))
    if isinstance(f, Implies):
        a, b = _simplify(f.left), _simplify(f.right)
        if isinstance(a, Bottom) or isinstance(b, Top):
            return TRUE
        if isinstance(a, Top):
            return b
        return Implies(a, b)
    if isinstance(f, Iff):
        a, b = _simplify(f.left), _simplify(f.right)
        if isinstance(a, Top):
            return b
        if isinstance(b, Top):
            return a
        return Iff(a, b)
    if isinstance(f, (Forall, Exists)):
        body = _simplify(f.body)
        if isinstance(body, (Top, Bottom)):
            return body
        return type(f)(f.var, body)
    raise TypeError(f"not a formula: {f!r}")


def normalize(f: Formula) -> Formula:
    """
    Canonical form: distinct bound-variable names, folded constants, atoms as
    t >= 0 / t > 0 / t = 0 / t != 0, flattened and sorted And/Or.
    """
    taken = set(formula_variables(f))
    renamed = _alpha_rename(f, taken, {})
    return _simplify(renamed)
