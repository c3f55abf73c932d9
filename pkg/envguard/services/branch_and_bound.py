# envguard/services/branch_and_bound.py
"""
Interval branch-and-bound for universal obligations with nonlinear atoms.

The obligation is first simplified: premise equalities that define a
variable are substituted away (one-point rule), premise components that do
not touch the conclusion are dropped once a witness for them is found, and
the box comes from the domain intersected with single-variable premise
bounds. Boxes are then refined until Kleene evaluation proves them, an exact
sample point violates the matrix, or the depth cap is hit.
"""

from __future__ import annotations
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import chain
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from envguard.errors import DivisionByZero, NonlinearAtom, UnboundVariable
from envguard.hybrid.implementations import NetworkBinding
from envguard.kernel.formulas import (
    Compare,
    Formula,
    Implies,
    conj,
    conjuncts,
    evaluate_formula,
    formula_variables,
    substitute,
)
from envguard.kernel.terms import Sub, Term, Var, as_linear, evaluate_term, substitute_term, term_variables
from envguard.services import fourier_motzkin as fm
from envguard.services.intervals import (
    Interval,
    box_center,
    box_corners,
    kleene,
    split_box,
    undecided_slack,
)
from envguard.services.obligations import Obligation
from envguard.services.solver import SolverOptions, SolverStats, Verdict
from envguard.utils.logging import get_logger

Bound = Tuple[Optional[Fraction], Optional[Fraction]]


@dataclass(frozen=True)
class Prepared:
    parts: Tuple[Formula, ...]
    conclusion: Formula
    definitions: Tuple[Tuple[str, Term], ...] = ()
    witnesses: Mapping[str, Fraction] = field(default_factory=dict)
    bounds: Mapping[str, Bound] = field(default_factory=dict)
    network: Optional[NetworkBinding] = None
    vacuous: bool = False

    @property
    def formula(self) -> Formula:
        return Implies(conj(*self.parts), self.conclusion)

    def variables(self) -> Tuple[str, ...]:
        names = set(formula_variables(self.formula))
        if self.network is not None:
            for t in self.network.inputs:
                names |= term_variables(t)
            names -= set(self.network.outputs)
        return tuple(sorted(names))

    def box(self, names: Optional[Iterable[str]] = None) -> Dict[str, Interval]:
        """Interval box over the fully bounded names."""
        out: Dict[str, Interval] = {}
        for x in names if names is not None else self.variables():
            lo, hi = self.bounds.get(x, (None, None))
            if lo is not None and hi is not None:
                out[x] = Interval(lo, hi)
        return out

    def unbounded(self, names: Optional[Iterable[str]] = None) -> List[str]:
        names = list(names if names is not None else self.variables())
        box = self.box(names)
        return [x for x in names if x not in box]


# -----------------------------
# Simplification
# -----------------------------
def _definition(part: Formula, allowed: FrozenSet[str]) -> Optional[Tuple[str, Term]]:
    if not (isinstance(part, Compare) and part.op == "="):
        return None
    for lhs, rhs in ((part.left, part.right), (part.right, part.left)):
        if isinstance(lhs, Var) and lhs.name in allowed and lhs.name not in term_variables(rhs):
            return lhs.name, rhs
    return None


def _one_point(parts: List[Formula], conclusion: Formula, allowed: FrozenSet[str], network: Optional[NetworkBinding]):
    definitions: List[Tuple[str, Term]] = []
    changed = True
    while changed:
        changed = False
        for part in parts:
            found = _definition(part, allowed)
            if found is None:
                continue
            x, t = found
            mapping = {x: t}
            parts = [substitute(p, mapping) for p in parts if p is not part]
            conclusion = substitute(conclusion, mapping)
            definitions = [(y, substitute_term(u, mapping)) for y, u in definitions]
            definitions.append((x, t))
            if network is not None:
                network = network.substitute(mapping)
            allowed = allowed - {x}
            changed = True
            break
    return parts, conclusion, definitions, network


def single_bound(part: Formula) -> Optional[Tuple[str, Bound]]:
    """x >= c, x <= c, x = c (in any linear arrangement) as a bound on x."""
    if not isinstance(part, Compare) or part.op == "!=":
        return None
    names = formula_variables(part)
    if len(names) != 1:
        return None
    (x,) = names
    try:
        coeffs, const = as_linear(Sub(part.left, part.right))
    except (NonlinearAtom, DivisionByZero):
        return None
    a = coeffs.get(x, Fraction(0))
    if a == 0:
        return None
    root = -const / a
    op = part.op
    if op == "=":
        return x, (root, root)
    # left - right  op  0, normalised to  a*x + const >= 0  or  <= 0
    upward = op in (">=", ">")
    if (a > 0) == upward:
        return x, (root, None)
    return x, (None, root)


def tighten(current: Bound, extra: Bound) -> Bound:
    lo, hi = current
    if extra[0] is not None and (lo is None or extra[0] > lo):
        lo = extra[0]
    if extra[1] is not None and (hi is None or extra[1] < hi):
        hi = extra[1]
    return lo, hi


def domain_bound(ob: Obligation, name: str, domain: Mapping[str, Interval]) -> Bound:
    iv = domain.get(name)
    entry = ob.generations.get(name)
    if iv is None and entry is not None and entry[1] == 0:
        iv = domain.get(entry[0])
    return (iv.lo, iv.hi) if iv is not None else (None, None)


def _components(parts: Sequence[Formula], roots: FrozenSet[str]) -> Tuple[List[Formula], List[List[Formula]]]:
    """Split premise conjuncts into those connected to `roots` and the rest, by shared variables."""
    reach = set(roots)
    connected = [False] * len(parts)
    changed = True
    while changed:
        changed = False
        for i, p in enumerate(parts):
            if connected[i]:
                continue
            names = formula_variables(p)
            if names & reach:
                connected[i] = True
                reach |= names
                changed = True
    kept = [p for i, p in enumerate(parts) if connected[i]]
    loose = [p for i, p in enumerate(parts) if not connected[i]]
    groups: List[List[Formula]] = []
    while loose:
        group = [loose.pop(0)]
        names = set(formula_variables(group[0]))
        grew = True
        while grew:
            grew = False
            for p in list(loose):
                if formula_variables(p) & names:
                    group.append(p)
                    names |= formula_variables(p)
                    loose.remove(p)
                    grew = True
        groups.append(group)
    return kept, groups


def prepare(
    ob: Obligation,
    domain: Mapping[str, Interval],
    protected: Iterable[str] = (),
) -> Prepared:
    """Simplify a universal obligation for box-based search."""
    premise, conclusion = ob.premise_conclusion()
    allowed = frozenset(ob.variables()) - frozenset(protected)
    network = ob.network
    if network is not None:
        allowed -= frozenset(network.outputs)
    parts, conclusion, definitions, network = _one_point(list(conjuncts(premise)), conclusion, allowed, network)

    roots = set(formula_variables(conclusion))
    if network is not None:
        roots |= set(network.outputs)
        for t in network.inputs:
            roots |= term_variables(t)
    kept, groups = _components(parts, frozenset(roots))
    witnesses: Dict[str, Fraction] = {}
    for group in groups:
        if not formula_variables(conj(*group)):
            if not evaluate_formula(conj(*group), {}):
                return Prepared(tuple(kept), conclusion, tuple(definitions), witnesses, {}, network, vacuous=True)
            continue
        try:
            models = (fm.find_model(c) for c in fm.dnf(fm.linearize(conj(*group))))
            model = next((m for m in models if m is not None), False)
        except NonlinearAtom:
            kept.extend(group)
            continue
        if model is False:
            return Prepared(tuple(kept), conclusion, tuple(definitions), witnesses, {}, network, vacuous=True)
        witnesses.update(model)

    names = set(formula_variables(conj(*kept, conclusion)))
    if network is not None:
        for t in network.inputs:
            names |= term_variables(t)
    bounds: Dict[str, Bound] = {x: domain_bound(ob, x, domain) for x in names}
    for part in kept:
        found = single_bound(part)
        if found is not None and found[0] in bounds:
            bounds[found[0]] = tighten(bounds[found[0]], found[1])
    vacuous = any(lo is not None and hi is not None and lo > hi for lo, hi in bounds.values())
    return Prepared(tuple(kept), conclusion, tuple(definitions), witnesses, bounds, network, vacuous)


# -----------------------------
# Counterexamples
# -----------------------------
def complete_point(ob: Obligation, prep: Prepared, point: Mapping[str, Fraction]) -> Dict[str, Fraction]:
    """Extend a point over the simplified variables to all quantified variables."""
    values: Dict[str, Fraction] = dict(prep.witnesses)
    values.update(point)
    for _, t in prep.definitions:
        for y in term_variables(t):
            values.setdefault(y, Fraction(0))
    for x, t in prep.definitions:
        values[x] = evaluate_term(t, values)
    return values


def confirm_counterexample(ob: Obligation, values: Mapping[str, Fraction]) -> Optional[Dict[str, Fraction]]:
    """Exact check that the matrix is false at `values`; returns the quantified part if so."""
    full = dict(values)
    for x in formula_variables(ob.matrix):
        full.setdefault(x, Fraction(0))
    if ob.network is not None:
        try:
            inputs = [evaluate_term(t, full) for t in ob.network.inputs]
        except (UnboundVariable, DivisionByZero):
            return None
        for name, y in zip(ob.network.outputs, ob.network.net.evaluate(inputs)):
            full[name] = y
    try:
        if evaluate_formula(ob.matrix, full):
            return None
    except (UnboundVariable, DivisionByZero):
        return None
    return {x: full[x] for x in ob.variables() if x in full}


# -----------------------------
# Box search
# -----------------------------
def _split_choice(formula: Formula, box: Mapping[str, Interval], split_width: Fraction) -> Optional[str]:
    candidates = [x for x in sorted(box) if box[x].width > split_width]
    if not candidates:
        return None

    def score(x: str):
        left, right = split_box(box, x)
        return max(undecided_slack(formula, left), undecided_slack(formula, right)), -box[x].width, x

    return min(candidates, key=score)


def _examine(task) -> Tuple[str, Optional[Dict[str, Fraction]], Optional[str]]:
    """("proven" | "cex" | "open", violating point, variable to split)."""
    formula, box, split_width = task
    if kleene(formula, box) is True:
        return "proven", None, None
    split = _split_choice(formula, box, split_width)
    for point in chain([box_center(box)], box_corners(box, limit=64)):
        try:
            if not evaluate_formula(formula, point):
                return "cex", point, split
        except DivisionByZero:
            continue
    return "open", None, split


def bb_decide(
    ob: Obligation,
    domain: Mapping[str, Interval],
    options: Optional[SolverOptions] = None,
    pool=None,
    deadline: Optional[float] = None,
    logger: Optional[logging.Logger] = None,
) -> Verdict:
    logger = logger or get_logger(__name__)
    options = options or SolverOptions()
    deadline = deadline or options.deadline()
    started = time.monotonic()
    stats = SolverStats()

    if not ob.is_universal():
        return Verdict.unknown("branch and bound needs a universal obligation", stats, "bb")
    prep = prepare(ob, domain)
    if prep.vacuous:
        stats.wall_time = time.monotonic() - started
        return Verdict.proven(stats, "bb")
    missing = prep.unbounded()
    if missing:
        return Verdict.unknown(f"unbounded variable: {', '.join(missing)}", stats, "bb")

    formula = prep.formula
    batch = 4 * (pool.workers if pool is not None else 1)
    queue = deque([(prep.box(), 0)])
    verdict: Optional[Verdict] = None
    while queue and verdict is None:
        if time.monotonic() > deadline:
            verdict = Verdict.unknown("timeout", stats, "bb")
            break
        work = [queue.popleft() for _ in range(min(batch, len(queue)))]
        tasks = [(formula, box, options.split_width) for box, _ in work]
        results = pool.map_ordered(_examine, tasks) if pool is not None else [_examine(t) for t in tasks]
        for (box, depth), (kind, point, split) in zip(work, results):
            stats.boxes_explored += 1
            stats.depth_max = max(stats.depth_max, depth)
            if kind == "proven":
                continue
            if kind == "cex":
                cex = confirm_counterexample(ob, complete_point(ob, prep, point))
                if cex is not None:
                    verdict = Verdict.found(cex, stats, "bb")
                    break
                logger.debug("bb: sample point did not survive exact confirmation")
            if split is None:
                verdict = Verdict.unknown("split width reached", stats, "bb")
                break
            if depth >= options.depth_cap:
                verdict = Verdict.unknown("depth cap reached", stats, "bb")
                break
            left, right = split_box(box, split)
            queue.extend(((left, depth + 1), (right, depth + 1)))
    stats.wall_time = time.monotonic() - started
    logger.debug("bb: %d boxes, depth %d", stats.boxes_explored, stats.depth_max)
    return verdict or Verdict.proven(stats, "bb")
