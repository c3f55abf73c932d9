# envguard/hybrid/programs.py
"""
Discrete, loop-free hybrid programs and their operational semantics.

The AST has no loop or ODE constructors, so every constructible program is in
the fragment. A program is "concrete" when all its tests are quantifier-free.
"""

from __future__ import annotations
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, List, Mapping, Sequence, Tuple, Union

import numpy as np

from envguard.kernel.formulas import TRUE, Formula, evaluate_formula, formula_variables, is_quantifier_free
from envguard.kernel.terms import Term, evaluate_term, term_variables
from envguard.utils.rationals import sample_rational


class HybridProgram:
    __slots__ = ()

    def free_variables(self) -> FrozenSet[str]:
        return program_free_variables(self)

    def __str__(self) -> str:
        return print_program(self)


@dataclass(frozen=True)
class Assign(HybridProgram):
    var: str
    term: Term


@dataclass(frozen=True)
class AssignAny(HybridProgram):
    var: str


@dataclass(frozen=True)
class Test(HybridProgram):
    cond: Formula


@dataclass(frozen=True)
class Seq(HybridProgram):
    first: HybridProgram
    second: HybridProgram


@dataclass(frozen=True)
class Choice(HybridProgram):
    left: HybridProgram
    right: HybridProgram


PROGRAM_CONSTRUCTORS = (Assign, AssignAny, Test, Seq, Choice)


def skip() -> HybridProgram:
    return Test(TRUE)


def seq(*programs: HybridProgram) -> HybridProgram:
    if not programs:
        return skip()
    out = programs[-1]
    for p in reversed(programs[:-1]):
        out = Seq(p, out)
    return out


def statements(hp: HybridProgram) -> List[HybridProgram]:
    """Flatten nested sequential composition into a list."""
    if isinstance(hp, Seq):
        return statements(hp.first) + statements(hp.second)
    return [hp]


def is_concrete(hp: HybridProgram) -> bool:
    if isinstance(hp, Test):
        return is_quantifier_free(hp.cond)
    if isinstance(hp, Seq):
        return is_concrete(hp.first) and is_concrete(hp.second)
    if isinstance(hp, Choice):
        return is_concrete(hp.left) and is_concrete(hp.right)
    return True


# -----------------------------
# Static analysis
# -----------------------------
def bound_variables(hp: HybridProgram) -> Tuple[str, ...]:
    """Variables written on some path, in order of first occurrence."""
    seen: Dict[str, None] = {}

    def walk(p):
        if isinstance(p, (Assign, AssignAny)):
            seen.setdefault(p.var, None)
        elif isinstance(p, Seq):
            walk(p.first)
            walk(p.second)
        elif isinstance(p, Choice):
            walk(p.left)
            walk(p.right)

    walk(hp)
    return tuple(seen)


def must_bound_variables(hp: HybridProgram) -> FrozenSet[str]:
    """Variables written on every path."""
    if isinstance(hp, (Assign, AssignAny)):
        return frozenset({hp.var})
    if isinstance(hp, Test):
        return frozenset()
    if isinstance(hp, Seq):
        return must_bound_variables(hp.first) | must_bound_variables(hp.second)
    if isinstance(hp, Choice):
        return must_bound_variables(hp.left) & must_bound_variables(hp.right)
    raise TypeError(f"not a hybrid program: {hp!r}")


def program_free_variables(hp: HybridProgram) -> FrozenSet[str]:
    """Variables that may be read before they are written."""
    if isinstance(hp, Assign):
        return term_variables(hp.term)
    if isinstance(hp, AssignAny):
        return frozenset()
    if isinstance(hp, Test):
        return formula_variables(hp.cond)
    if isinstance(hp, Seq):
        return program_free_variables(hp.first) | (
            program_free_variables(hp.second) - must_bound_variables(hp.first)
        )
    if isinstance(hp, Choice):
        return program_free_variables(hp.left) | program_free_variables(hp.right)
    raise TypeError(f"not a hybrid program: {hp!r}")


# -----------------------------
# Semantics
# -----------------------------
class Blocked:
    """Result of a run whose chosen path failed a test."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Blocked"


BLOCKED = Blocked()


class ScriptedChooser:
    """Replays a fixed list of values for `x := *` and branch bits for choices."""

    def __init__(self, values: Sequence = (), branches: Sequence[int] = ()):
        self._values = [Fraction(v) for v in values]
        self._branches = list(branches)

    def value(self, var: str) -> Fraction:
        if not self._values:
            raise LookupError(f"no scripted value left for {var}")
        return self._values.pop(0)

    def branch(self) -> int:
        if not self._branches:
            raise LookupError("no scripted branch left")
        return int(self._branches.pop(0))


class RandomChooser:
    """Random nondeterminism: values on random scales, fair coin for choices."""

    SCALES = (Fraction(1, 4), Fraction(1), Fraction(4), Fraction(16))

    def __init__(self, rng: np.random.Generator, scales: Sequence[Fraction] = SCALES):
        self.rng = rng
        self.scales = tuple(scales)

    def value(self, var: str) -> Fraction:
        scale = self.scales[int(self.rng.integers(0, len(self.scales)))]
        return sample_rational(self.rng, -scale, scale)

    def branch(self) -> int:
        return int(self.rng.integers(0, 2))


def run(hp: HybridProgram, s: Mapping[str, Fraction], chooser=None) -> Union[Dict[str, Fraction], Blocked]:
    """Execute one path of hp from state s; Blocked iff a test on the path fails."""
    state = dict(s)
    if _exec(hp, state, chooser):
        return state
    return BLOCKED


def _exec(hp: HybridProgram, state: Dict[str, Fraction], chooser) -> bool:
    if isinstance(hp, Assign):
        state[hp.var] = evaluate_term(hp.term, state)
        return True
    if isinstance(hp, AssignAny):
        state[hp.var] = Fraction(chooser.value(hp.var))
        return True
    if isinstance(hp, Test):
        return evaluate_formula(hp.cond, state)
    if isinstance(hp, Seq):
        return _exec(hp.first, state, chooser) and _exec(hp.second, state, chooser)
    if isinstance(hp, Choice):
        return _exec(hp.right if chooser.branch() else hp.left, state, chooser)
    raise TypeError(f"not a hybrid program: {hp!r}")


# -----------------------------
# Printer
# -----------------------------
def print_program(hp: HybridProgram) -> str:
    from envguard.kernel.syntax import print_formula, print_term

    if isinstance(hp, Assign):
        return f"{hp.var} := {print_term(hp.term)}"
    if isinstance(hp, AssignAny):
        return f"{hp.var} := *"
    if isinstance(hp, Test):
        return f"?({print_formula(hp.cond)})"
    if isinstance(hp, Seq):
        first = print_program(hp.first)
        if isinstance(hp.first, Choice):
            first = "{" + first + "}"
        second = print_program(hp.second)
        if isinstance(hp.second, Choice):
            second = "{" + second + "}"
        return f"{first}; {second}"
    if isinstance(hp, Choice):
        left = print_program(hp.left)
        right = print_program(hp.right)
        if isinstance(hp.left, Seq):
            left = "{" + left + "}"
        if isinstance(hp.right, (Seq, Choice)):
            right = "{" + right + "}"
        return f"{left} ++ {right}"
    raise TypeError(f"not a hybrid program: {hp!r}")
