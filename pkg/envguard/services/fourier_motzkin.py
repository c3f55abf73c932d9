# envguard/services/fourier_motzkin.py
"""
Quantifier elimination for linear real arithmetic over exact rationals.

Formulas are first put in negation normal form over LinearAtoms
(sum c*x + k  rel  0 with rel one of >=, >, =). Quantifier blocks are
eliminated innermost first: an existential block goes through DNF and
Fourier-Motzkin projection per disjunct; a universal block is handled as
not-exists-not. Equalities are used as pivots before any pairwise
combination, strict and non-strict bounds are combined natively.
"""

from __future__ import annotations
import time
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from envguard.errors import ResourceLimit
from envguard.kernel.formulas import (
    FALSE,
    TRUE,
    And,
    Bottom,
    Compare,
    Exists,
    Forall,
    Formula,
    Iff,
    Implies,
    Not,
    Or,
    Top,
    conj,
    disj,
    exists,
    forall,
    formula_variables,
)
from envguard.kernel.terms import ZERO, Sub, as_linear, linear_term
from envguard.utils.rationals import nearest_integer_in

RELATIONS = (">=", ">", "=")


# -----------------------------
# Atoms
# -----------------------------
@dataclass(frozen=True)
class LinearAtom:
    """sum(c * x) + const  rel  0, coefficients coprime integers in name order."""

    coeffs: Tuple[Tuple[str, Fraction], ...]
    const: Fraction
    rel: str

    def coeff(self, x: str) -> Fraction:
        for name, c in self.coeffs:
            if name == x:
                return c
        return Fraction(0)

    def variables(self) -> FrozenSet[str]:
        return frozenset(name for name, _ in self.coeffs)

    def value(self, s: Mapping[str, Fraction]) -> Fraction:
        return sum((c * Fraction(s[name]) for name, c in self.coeffs), self.const)

    def holds(self, s: Mapping[str, Fraction]) -> bool:
        v = self.value(s)
        if self.rel == ">=":
            return v >= 0
        if self.rel == ">":
            return v > 0
        return v == 0

    def negate(self) -> Tuple["AtomLike", ...]:
        """Disjuncts of the negation."""
        neg = {x: -c for x, c in self.coeffs}
        if self.rel == ">=":
            return (make_atom(neg, -self.const, ">"),)
        if self.rel == ">":
            return (make_atom(neg, -self.const, ">="),)
        return (make_atom(dict(self.coeffs), self.const, ">"), make_atom(neg, -self.const, ">"))

    def __str__(self) -> str:
        return f"{linear_term(dict(self.coeffs), self.const)} {self.rel} 0"


AtomLike = Union[LinearAtom, bool]


def _holds_ground(value: Fraction, rel: str) -> bool:
    if rel == ">=":
        return value >= 0
    if rel == ">":
        return value > 0
    return value == 0


def make_atom(coeffs: Mapping[str, Fraction], const: Fraction, rel: str) -> AtomLike:
    """Normalized atom, or a bool when no variable is left."""
    if rel not in RELATIONS:
        raise ValueError(f"unknown relation {rel!r}")
    items = sorted((x, Fraction(c)) for x, c in coeffs.items() if c != 0)
    const = Fraction(const)
    if not items:
        return _holds_ground(const, rel)
    den = lcm(*(c.denominator for _, c in items))
    nums = [int(c * den) for _, c in items]
    g = 0
    for n in nums:
        g = gcd(g, n)
    factor = Fraction(den, g)
    if rel == "=" and items[0][1] < 0:
        factor = -factor
    scaled = tuple((x, c * factor) for x, c in items)
    return LinearAtom(scaled, const * factor, rel)


def _combine(a: LinearAtom, alpha: Fraction, b: LinearAtom, beta: Fraction, rel: str) -> AtomLike:
    out: Dict[str, Fraction] = {}
    for x, c in a.coeffs:
        out[x] = out.get(x, Fraction(0)) + alpha * c
    for x, c in b.coeffs:
        out[x] = out.get(x, Fraction(0)) + beta * c
    return make_atom(out, alpha * a.const + beta * b.const, rel)


# -----------------------------
# NNF trees
# -----------------------------
@dataclass(frozen=True)
class LAnd:
    args: Tuple["Tree", ...]


@dataclass(frozen=True)
class LOr:
    args: Tuple["Tree", ...]


@dataclass(frozen=True)
class LQuant:
    kind: str  # "forall" | "exists"
    variables: Tuple[str, ...]
    body: "Tree"


Tree = Union[bool, LinearAtom, LAnd, LOr, LQuant]


def land(*parts: Tree) -> Tree:
    flat: List[Tree] = []
    for p in parts:
        if p is True:
            continue
        if p is False:
            return False
        if isinstance(p, LAnd):
            flat.extend(p.args)
        else:
            flat.append(p)
    flat = list(dict.fromkeys(flat))
    if not flat:
        return True
    if len(flat) == 1:
        return flat[0]
    return LAnd(tuple(flat))


def lor(*parts: Tree) -> Tree:
    flat: List[Tree] = []
    for p in parts:
        if p is False:
            continue
        if p is True:
            return True
        if isinstance(p, LOr):
            flat.extend(p.args)
        else:
            flat.append(p)
    flat = list(dict.fromkeys(flat))
    if not flat:
        return False
    if len(flat) == 1:
        return flat[0]
    return LOr(tuple(flat))


def tree_variables(tree: Tree) -> FrozenSet[str]:
    if isinstance(tree, bool):
        return frozenset()
    if isinstance(tree, LinearAtom):
        return tree.variables()
    if isinstance(tree, LQuant):
        return tree_variables(tree.body) - set(tree.variables)
    out = set()
    for a in tree.args:
        out |= tree_variables(a)
    return frozenset(out)


def _linear_compare(f: Compare, positive: bool) -> Tree:
    if f.op in (">=", ">", "="):
        coeffs, k = as_linear(Sub(f.left, f.right))
        rel = f.op
    elif f.op in ("<=", "<"):
        coeffs, k = as_linear(Sub(f.right, f.left))
        rel = ">=" if f.op == "<=" else ">"
    else:  # !=
        coeffs, k = as_linear(Sub(f.left, f.right))
        neg = {x: -c for x, c in coeffs.items()}
        tree = lor(make_atom(coeffs, k, ">"), make_atom(neg, -k, ">"))
        return tree if positive else negate_qf(tree)
    atom = make_atom(coeffs, k, rel)
    return atom if positive else negate_qf(atom)


def linearize(f: Formula, positive: bool = True) -> Tree:
    """NNF tree of f (or of not f). Raises NonlinearAtom on a non-affine atom."""
    if isinstance(f, Compare):
        return _linear_compare(f, positive)
    if isinstance(f, Top):
        return positive
    if isinstance(f, Bottom):
        return not positive
    if isinstance(f, Not):
        return linearize(f.arg, not positive)
    if isinstance(f, And):
        parts = [linearize(a, positive) for a in f.args]
        return land(*parts) if positive else lor(*parts)
    if isinstance(f, Or):
        parts = [linearize(a, positive) for a in f.args]
        return lor(*parts) if positive else land(*parts)
    if isinstance(f, Implies):
        if positive:
            return lor(linearize(f.left, False), linearize(f.right, True))
        return land(linearize(f.left, True), linearize(f.right, False))
    if isinstance(f, Iff):
        a_pos, a_neg = linearize(f.left, True), linearize(f.left, False)
        b_pos, b_neg = linearize(f.right, True), linearize(f.right, False)
        if positive:
            return lor(land(a_pos, b_pos), land(a_neg, b_neg))
        return lor(land(a_pos, b_neg), land(a_neg, b_pos))
    if isinstance(f, (Forall, Exists)):
        kind = type(f)
        names = []
        body = f
        while isinstance(body, kind):
            names.append(body.var)
            body = body.body
        universal = isinstance(f, Forall) == positive
        return LQuant("forall" if universal else "exists", tuple(names), linearize(body, positive))
    raise TypeError(f"not a formula: {f!r}")


def negate_qf(tree: Tree) -> Tree:
    if isinstance(tree, bool):
        return not tree
    if isinstance(tree, LinearAtom):
        return lor(*tree.negate())
    if isinstance(tree, LAnd):
        return lor(*(negate_qf(a) for a in tree.args))
    if isinstance(tree, LOr):
        return land(*(negate_qf(a) for a in tree.args))
    raise ValueError("negate_qf expects a quantifier-free tree")


def evaluate_tree(tree: Tree, s: Mapping[str, Fraction]) -> bool:
    if isinstance(tree, bool):
        return tree
    if isinstance(tree, LinearAtom):
        return tree.holds(s)
    if isinstance(tree, LAnd):
        return all(evaluate_tree(a, s) for a in tree.args)
    if isinstance(tree, LOr):
        return any(evaluate_tree(a, s) for a in tree.args)
    raise ValueError("evaluate_tree expects a quantifier-free tree")


def tree_to_formula(tree: Tree) -> Formula:
    if tree is True:
        return TRUE
    if tree is False:
        return FALSE
    if isinstance(tree, LinearAtom):
        return Compare(tree.rel, linear_term(dict(tree.coeffs), tree.const), ZERO)
    if isinstance(tree, LAnd):
        return conj(*(tree_to_formula(a) for a in tree.args))
    if isinstance(tree, LOr):
        return disj(*(tree_to_formula(a) for a in tree.args))
    if isinstance(tree, LQuant):
        build = forall if tree.kind == "forall" else exists
        return build(tree.variables, tree_to_formula(tree.body))
    raise TypeError(f"not a tree: {tree!r}")


# -----------------------------
# Resource accounting
# -----------------------------
@dataclass
class EliminationContext:
    atoms_cap: int = 100_000
    deadline: Optional[float] = None
    eliminations: int = 0
    atoms_peak: int = 0

    def observe(self, n_atoms: int) -> None:
        if n_atoms > self.atoms_peak:
            self.atoms_peak = n_atoms
        if n_atoms > self.atoms_cap:
            raise ResourceLimit(f"atoms_peak cap {self.atoms_cap} exceeded")
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise ResourceLimit("timeout")


# -----------------------------
# DNF
# -----------------------------
Conjunct = FrozenSet[LinearAtom]


def _prune(conjuncts: Iterable[Conjunct]) -> List[Conjunct]:
    """Dedupe and drop conjuncts that contain another one (subsumed)."""
    unique = sorted(set(conjuncts), key=len)
    kept: List[Conjunct] = []
    for c in unique:
        if any(k <= c for k in kept):
            continue
        kept.append(c)
    return kept


def dnf(tree: Tree, ctx: Optional[EliminationContext] = None) -> List[Conjunct]:
    """Disjunctive normal form of a quantifier-free tree as a list of atom sets."""
    ctx = ctx or EliminationContext()
    if tree is True:
        return [frozenset()]
    if tree is False:
        return []
    if isinstance(tree, LinearAtom):
        return [frozenset((tree,))]
    if isinstance(tree, LOr):
        out: List[Conjunct] = []
        for a in tree.args:
            out.extend(dnf(a, ctx))
        return _prune(out)
    if isinstance(tree, LAnd):
        acc: List[Conjunct] = [frozenset()]
        for a in tree.args:
            part = dnf(a, ctx)
            acc = _prune(x | y for x in acc for y in part)
            ctx.observe(sum(len(c) for c in acc))
            if not acc:
                return []
        return acc
    raise ValueError("dnf expects a quantifier-free tree")


# -----------------------------
# Fourier-Motzkin projection
# -----------------------------
def _tidy(atoms: Iterable[AtomLike]) -> Optional[List[LinearAtom]]:
    """Drop true atoms, keep the tightest of parallel inequalities; None if false."""
    ineq: Dict[Tuple, LinearAtom] = {}
    eqs: Dict[Tuple, LinearAtom] = {}
    for a in atoms:
        if a is True:
            continue
        if a is False:
            return None
        if a.rel == "=":
            prev = eqs.get(a.coeffs)
            if prev is not None and prev.const != a.const:
                return None
            eqs[a.coeffs] = a
            continue
        prev = ineq.get(a.coeffs)
        if prev is None or a.const < prev.const or (a.const == prev.const and a.rel == ">"):
            ineq[a.coeffs] = a
    return list(eqs.values()) + list(ineq.values())


def fm_project(
    atoms: Iterable[LinearAtom],
    variables: Sequence[str],
    ctx: Optional[EliminationContext] = None,
    trace: Optional[List[Tuple[str, str, object]]] = None,
) -> Optional[List[LinearAtom]]:
    """
    Eliminate `variables` from the conjunction of `atoms`. Returns the projected
    conjunction, or None if it is unsatisfiable. When `trace` is given, one
    ("eq", x, pivot) or ("ineq", x, bounds) entry is appended per eliminated
    variable for back-substitution.
    """
    ctx = ctx or EliminationContext()
    current = _tidy(atoms)
    if current is None:
        return None
    remaining = list(variables)
    while True:
        present = [x for x in remaining if any(a.coeff(x) for a in current)]
        if not present:
            return current
        pivot = None
        for a in current:
            if a.rel != "=":
                continue
            for x in present:
                if a.coeff(x):
                    pivot = (x, a)
                    break
            if pivot:
                break

        if pivot is not None:
            x, eq = pivot
            cx = eq.coeff(x)
            new: List[AtomLike] = []
            for a in current:
                if a is eq:
                    continue
                c = a.coeff(x)
                new.append(a if not c else _combine(a, Fraction(1), eq, -c / cx, a.rel))
            if trace is not None:
                trace.append(("eq", x, eq))
        else:
            def cost(y: str) -> Tuple[int, str]:
                lo = sum(1 for a in current if a.coeff(y) > 0)
                hi = sum(1 for a in current if a.coeff(y) < 0)
                return lo * hi, y

            x = min(present, key=cost)
            lower = [a for a in current if a.coeff(x) > 0]
            upper = [a for a in current if a.coeff(x) < 0]
            new = [a for a in current if not a.coeff(x)]
            for lo in lower:
                for up in upper:
                    rel = ">" if ">" in (lo.rel, up.rel) else ">="
                    new.append(_combine(lo, -up.coeff(x), up, lo.coeff(x), rel))
            if trace is not None:
                trace.append(("ineq", x, tuple(lower + upper)))
        ctx.eliminations += 1
        remaining.remove(x)
        current = _tidy(new)
        if current is None:
            return None
        ctx.observe(len(current))


def _choose(lo, lo_strict, hi, hi_strict) -> Fraction:
    z = nearest_integer_in(lo, hi, lo_strict, hi_strict)
    if z is not None:
        return Fraction(z)
    if lo is not None and not lo_strict:
        return lo
    if hi is not None and not hi_strict:
        return hi
    if lo is not None and hi is not None:
        return (lo + hi) / 2
    if lo is not None:
        return lo + 1
    return hi - 1


def find_model(atoms: Iterable[LinearAtom], ctx: Optional[EliminationContext] = None) -> Optional[Dict[str, Fraction]]:
    """
    A rational point satisfying every atom, or None. Variables are eliminated
    completely and then assigned in reverse order, each one the integer of least
    magnitude in its feasible interval when there is one.
    """
    atoms = list(atoms)
    names = sorted(set().union(*(a.variables() for a in atoms))) if atoms else []
    trace: List[Tuple[str, str, object]] = []
    if fm_project(atoms, names, ctx, trace) is None:
        return None
    values: Dict[str, Fraction] = {}

    def rest(a: LinearAtom, x: str) -> Fraction:
        total = a.const
        for y, c in a.coeffs:
            if y != x:
                total += c * values.setdefault(y, Fraction(0))
        return total

    for kind, x, data in reversed(trace):
        if kind == "eq":
            values[x] = -rest(data, x) / data.coeff(x)
            continue
        lo = hi = None
        lo_strict = hi_strict = False
        for a in data:
            c = a.coeff(x)
            bound = -rest(a, x) / c
            strict = a.rel == ">"
            if c > 0:
                if lo is None or bound > lo or (bound == lo and strict):
                    lo, lo_strict = bound, strict
            else:
                if hi is None or bound < hi or (bound == hi and strict):
                    hi, hi_strict = bound, strict
        values[x] = _choose(lo, lo_strict, hi, hi_strict)
    for x in names:
        values.setdefault(x, Fraction(0))
    return values


# -----------------------------
# Elimination
# -----------------------------
def exists_elim(variables: Sequence[str], tree: Tree, ctx: EliminationContext) -> Tree:
    live = [x for x in variables if x in tree_variables(tree)]
    if not live:
        return tree
    if isinstance(tree, LOr):
        return lor(*(exists_elim(live, a, ctx) for a in tree.args))
    if isinstance(tree, LAnd):
        free = [a for a in tree.args if not (tree_variables(a) & set(live))]
        if free:
            bound = [a for a in tree.args if tree_variables(a) & set(live)]
            return land(*free, exists_elim(live, land(*bound), ctx))
    out: List[Tree] = []
    for c in dnf(tree, ctx):
        projected = fm_project(c, live, ctx)
        if projected is not None:
            out.append(land(*projected))
    return lor(*out)


def eliminate(tree: Tree, ctx: Optional[EliminationContext] = None) -> Tree:
    """Quantifier-free tree equivalent to `tree`."""
    ctx = ctx or EliminationContext()
    if isinstance(tree, (bool, LinearAtom)):
        return tree
    if isinstance(tree, LAnd):
        return land(*(eliminate(a, ctx) for a in tree.args))
    if isinstance(tree, LOr):
        return lor(*(eliminate(a, ctx) for a in tree.args))
    body = eliminate(tree.body, ctx)
    if tree.kind == "exists":
        return exists_elim(tree.variables, body, ctx)
    return negate_qf(exists_elim(tree.variables, negate_qf(body), ctx))


def eliminate_quantifiers(f: Formula, ctx: Optional[EliminationContext] = None) -> Formula:
    """Quantifier-free formula equivalent to f (linear arithmetic only)."""
    return tree_to_formula(eliminate(linearize(f), ctx))


def decide_closed(f: Formula, ctx: Optional[EliminationContext] = None) -> bool:
    free = formula_variables(f)
    if free:
        raise ValueError(f"formula is not closed: free {sorted(free)}")
    tree = eliminate(linearize(f), ctx)
    if not isinstance(tree, bool):
        raise ValueError(f"formula is not closed: free {sorted(tree_variables(tree))}")
    return tree
