# envguard/hybrid/monitor.py
"""
Controller monitors for discrete loop-free programs.

synthesize_monitor executes the program symbolically: `x := *` introduces a
fresh symbol, tests add path conditions, choices fork the path. Each path ends
with x_post = <symbolic value> for every bound variable, then the fresh
symbols are removed (by their defining equation when there is one, by
Fourier-Motzkin otherwise). The monitor is the disjunction over paths.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from envguard.errors import DivisionByZero, MonitorSynthesisError, NonlinearAtom, UnboundVariable
from envguard.hybrid.programs import (
    BLOCKED,
    Assign,
    AssignAny,
    Choice,
    HybridProgram,
    RandomChooser,
    ScriptedChooser,
    Seq,
    Test,
    bound_variables,
    program_free_variables,
    run,
)
from envguard.kernel.formulas import (
    Compare,
    Formula,
    Or,
    Top,
    all_names,
    conj,
    conjuncts,
    disj,
    evaluate_formula,
    exists,
    formula_variables,
    substitute,
)
from envguard.kernel.terms import Const, Sub, Term, Var, as_linear, evaluate_term, linear_term, substitute_term
from envguard.services import fourier_motzkin as fm
from envguard.utils.logging import get_logger

POST_SUFFIX = "_post"


def post_name(x: str) -> str:
    return f"{x}{POST_SUFFIX}"


# -----------------------------
# Types
# -----------------------------
@dataclass(frozen=True)
class Witness:
    """Value of a fresh symbol on a path: a term over pre/post names, or None (solve from raw)."""

    symbol: str
    var: str
    term: Optional[Term]


@dataclass(frozen=True)
class MonitorPath:
    branches: Tuple[int, ...]
    witnesses: Tuple[Witness, ...]
    raw: Formula
    formula: Formula


@dataclass(frozen=True)
class Monitor:
    formula: Formula
    pre_vars: Tuple[str, ...]
    post_vars: Tuple[str, ...]
    program: HybridProgram
    paths: Tuple[MonitorPath, ...] = field(default=(), compare=False)

    @property
    def bound_vars(self) -> Tuple[str, ...]:
        return tuple(p[: -len(POST_SUFFIX)] for p in self.post_vars)


@dataclass
class _Path:
    store: Dict[str, Term]
    conds: List[Formula]
    symbols: List[Tuple[str, str]]
    branches: Tuple[int, ...]

    def fork(self, bit: Optional[int] = None) -> "_Path":
        branches = self.branches if bit is None else self.branches + (bit,)
        return _Path(dict(self.store), list(self.conds), list(self.symbols), branches)


# -----------------------------
# Symbolic execution
# -----------------------------
class _Fresh:
    def __init__(self, taken):
        self.taken = set(taken)

    def __call__(self, base: str) -> str:
        name = f"{base}_any"
        while name in self.taken:
            name += "_"
        self.taken.add(name)
        return name


def _program_names(hp: HybridProgram) -> set:
    names = set(bound_variables(hp)) | set(program_free_variables(hp))
    stack = [hp]
    while stack:
        p = stack.pop()
        if isinstance(p, Test):
            names |= all_names(p.cond)
        elif isinstance(p, Seq):
            stack.extend((p.first, p.second))
        elif isinstance(p, Choice):
            stack.extend((p.left, p.right))
    return names


def _execute(hp: HybridProgram, path: _Path, fresh: _Fresh) -> List[_Path]:
    if isinstance(hp, Assign):
        out = path.fork()
        out.store[hp.var] = substitute_term(hp.term, dict(path.store))
        return [out]
    if isinstance(hp, AssignAny):
        out = path.fork()
        k = fresh(hp.var)
        out.store[hp.var] = Var(k)
        out.symbols.append((k, hp.var))
        return [out]
    if isinstance(hp, Test):
        out = path.fork()
        out.conds.append(substitute(hp.cond, dict(path.store)))
        return [out]
    if isinstance(hp, Seq):
        result: List[_Path] = []
        for mid in _execute(hp.first, path, fresh):
            result.extend(_execute(hp.second, mid, fresh))
        return result
    if isinstance(hp, Choice):
        return _execute(hp.left, path.fork(0), fresh) + _execute(hp.right, path.fork(1), fresh)
    raise TypeError(f"not a hybrid program: {hp!r}")


def _solve_for(part: Formula, k: str) -> Optional[Term]:
    """k as an affine term if `part` is an equation with a constant nonzero coefficient on k."""
    if not (isinstance(part, Compare) and part.op == "="):
        return None
    try:
        coeffs, const = as_linear(Sub(part.left, part.right))
    except (NonlinearAtom, DivisionByZero):
        return None
    c = coeffs.pop(k, Fraction(0))
    if c == 0:
        return None
    return linear_term({x: -a / c for x, a in coeffs.items()}, -const / c)


def _is_trivial(part: Formula) -> bool:
    if isinstance(part, Top):
        return True
    return isinstance(part, Compare) and part.op == "=" and part.left == part.right


def _eliminate_symbols(path: _Path, bound: Sequence[str]) -> MonitorPath:
    eqs = [Compare("=", Var(post_name(x)), path.store.get(x, Var(x))) for x in bound]
    parts: List[Formula] = []
    for c in path.conds:
        parts.extend(conjuncts(c))
    parts.extend(eqs)
    raw = conj(*parts)
    witnesses: List[Witness] = []

    for k, x in path.symbols:
        uses = [p for p in parts if k in formula_variables(p)]
        if not uses:
            witnesses.append(Witness(k, x, Const(0)))
            continue
        solution: Optional[Term] = None
        defining = None
        if path.store.get(x) == Var(k):
            solution = Var(post_name(x))
            defining = Compare("=", Var(post_name(x)), Var(k))
        else:
            for p in uses:
                solution = _solve_for(p, k)
                if solution is not None:
                    defining = p
                    break
        if solution is not None:
            parts = [substitute(p, {k: solution}) for p in parts if p is not defining]
            witnesses = [
                Witness(w.symbol, w.var, substitute_term(w.term, {k: solution}) if w.term is not None else None)
                for w in witnesses
            ]
            witnesses.append(Witness(k, x, solution))
            continue
        try:
            tree = fm.linearize(conj(*uses))
        except (NonlinearAtom, DivisionByZero) as e:
            raise MonitorSynthesisError(f"cannot eliminate {k} (for {x} := *): {e}") from e
        projected = fm.tree_to_formula(fm.exists_elim([k], tree, fm.EliminationContext()))
        parts = [p for p in parts if k not in formula_variables(p)] + [projected]
        witnesses.append(Witness(k, x, None))

    kept = [p for p in parts if not _is_trivial(p)]
    return MonitorPath(path.branches, tuple(witnesses), raw, conj(*kept))


def synthesize_monitor(hp: HybridProgram, logger: Optional[logging.Logger] = None) -> Monitor:
    """Exact controller monitor chi(x, x_post) of a discrete loop-free program."""
    logger = logger or get_logger(__name__)
    bound = bound_variables(hp)
    fresh = _Fresh(_program_names(hp) | {post_name(x) for x in bound})
    paths = _execute(hp, _Path({}, [], [], ()), fresh)
    monitored = tuple(_eliminate_symbols(p, bound) for p in paths)
    formula = disj(*(p.formula for p in monitored))
    logger.debug("monitor: %d path(s), %d bound variable(s)", len(monitored), len(bound))
    return Monitor(
        formula=formula,
        pre_vars=tuple(sorted(program_free_variables(hp))),
        post_vars=tuple(post_name(x) for x in bound),
        program=hp,
        paths=monitored,
    )


# -----------------------------
# Reachability by path enumeration
# -----------------------------
def _paths(hp: HybridProgram) -> List[List[HybridProgram]]:
    if isinstance(hp, Seq):
        return [a + b for a in _paths(hp.first) for b in _paths(hp.second)]
    if isinstance(hp, Choice):
        return _paths(hp.left) + _paths(hp.right)
    return [[hp]]


def reachability_formula(hp: HybridProgram) -> Formula:
    """
    Independent relational encoding: each path in SSA form with its
    intermediate versions existentially quantified.
    """
    bound = bound_variables(hp)
    taken = set(_program_names(hp)) | {post_name(x) for x in bound}
    counter = 0
    disjuncts: List[Formula] = []
    for stmts in _paths(hp):
        versions: Dict[str, Term] = {}
        hidden: List[str] = []
        parts: List[Formula] = []
        for st in stmts:
            if isinstance(st, Test):
                parts.append(substitute(st.cond, versions))
                continue
            counter += 1
            name = f"{st.var}__{counter}"
            while name in taken:
                name += "_"
            taken.add(name)
            if isinstance(st, Assign):
                parts.append(Compare("=", Var(name), substitute_term(st.term, versions)))
            versions[st.var] = Var(name)
            hidden.append(name)
        for x in bound:
            parts.append(Compare("=", Var(post_name(x)), versions.get(x, Var(x))))
        disjuncts.append(exists(hidden, conj(*parts)))
    return disj(*disjuncts)


# -----------------------------
# Empirical soundness/exactness check
# -----------------------------
@dataclass
class MonitorReport:
    samples: int
    executions: int = 0
    replays: int = 0
    skipped: int = 0
    execution_violations: List[Dict[str, Fraction]] = field(default_factory=list)
    replay_violations: List[Dict[str, Fraction]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.execution_violations and not self.replay_violations


def _random_state(names: Sequence[str], rng: np.random.Generator, fixed: Mapping[str, Fraction]) -> Dict[str, Fraction]:
    chooser = RandomChooser(rng)
    return {x: Fraction(fixed[x]) if x in fixed else chooser.value(x) for x in names}


def _sample_post(part: Formula, s: Mapping[str, Fraction], post_vars: Sequence[str], rng) -> Optional[Dict[str, Fraction]]:
    """A random-ish assignment of post variables satisfying `part` at pre-state s."""
    grounded = substitute(part, {x: Const(v) for x, v in s.items()})
    try:
        conjs = fm.dnf(fm.linearize(grounded))
    except (NonlinearAtom, DivisionByZero):
        return None
    if not conjs:
        return None
    atoms = list(conjs[int(rng.integers(0, len(conjs)))])
    chooser = RandomChooser(rng)
    order = list(post_vars)
    rng.shuffle(order)
    for x in order:
        hint = fm.make_atom({x: Fraction(1)}, -chooser.value(x), "=")
        if fm.find_model(atoms + [hint]) is not None:
            atoms.append(hint)
    model = fm.find_model(atoms)
    if model is None:
        return None
    return {x: model.get(x, Fraction(0)) for x in post_vars}


def _witness_values(path: MonitorPath, pair: Mapping[str, Fraction]) -> Optional[List[Fraction]]:
    values: Dict[str, Fraction] = {}
    unknown = []
    for w in path.witnesses:
        if w.term is None:
            unknown.append(w.symbol)
        else:
            try:
                values[w.symbol] = evaluate_term(w.term, pair)
            except UnboundVariable:
                unknown.append(w.symbol)
            except DivisionByZero:
                return None
    if unknown:
        mapping = {x: Const(v) for x, v in pair.items()}
        mapping.update({k: Const(v) for k, v in values.items()})
        residue = substitute(path.raw, mapping)
        try:
            conjs = fm.dnf(fm.linearize(residue))
        except (NonlinearAtom, DivisionByZero):
            return None
        for c in conjs:
            model = fm.find_model(c)
            if model is not None:
                for k in unknown:
                    values[k] = model.get(k, Fraction(0))
                break
        else:
            return None
    return [values[w.symbol] for w in path.witnesses]


def _replays(m: Monitor, s: Mapping[str, Fraction], post: Mapping[str, Fraction]) -> bool:
    pair = dict(s)
    pair.update(post)
    for path in m.paths:
        values = _witness_values(path, pair)
        if values is None:
            continue
        try:
            out = run(m.program, s, ScriptedChooser(values, path.branches))
        except (LookupError, DivisionByZero):
            continue
        if out is BLOCKED:
            continue
        if all(out[x] == post[post_name(x)] for x in m.bound_vars):
            return True
    return False


def check_monitor_soundness(
    m: Monitor,
    samples: int,
    rng: np.random.Generator,
    fixed: Optional[Mapping[str, Fraction]] = None,
    logger: Optional[logging.Logger] = None,
) -> MonitorReport:
    """
    (a) random executions must satisfy the monitor; (b) random pairs satisfying
    the monitor must be replayable by the program with extracted witnesses.
    """
    logger = logger or get_logger(__name__)
    fixed = dict(fixed or {})
    report = MonitorReport(samples=samples)
    names = sorted(set(m.pre_vars) | set(m.bound_vars) | set(fixed))

    for _ in range(samples):
        s = _random_state(names, rng, fixed)
        try:
            out = run(m.program, s, RandomChooser(rng))
        except DivisionByZero:
            continue
        if out is BLOCKED:
            continue
        report.executions += 1
        pair = dict(s)
        pair.update({post_name(x): out[x] for x in m.bound_vars})
        if not evaluate_formula(m.formula, pair):
            report.execution_violations.append(pair)

    parts = m.formula.args if isinstance(m.formula, Or) else (m.formula,)
    for _ in range(samples):
        s = _random_state(names, rng, fixed)
        part = parts[int(rng.integers(0, len(parts)))]
        post = _sample_post(part, s, m.post_vars, rng)
        if post is None:
            report.skipped += 1
            continue
        pair = dict(s)
        pair.update(post)
        if not evaluate_formula(m.formula, pair):
            report.skipped += 1
            continue
        report.replays += 1
        if not _replays(m, s, post):
            report.replay_violations.append(pair)

    if not report.ok:
        logger.warning(
            "monitor check: %d execution violation(s), %d unreplayable pair(s)",
            len(report.execution_violations),
            len(report.replay_violations),
        )
    return report
