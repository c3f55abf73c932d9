# envguard/nnet/verify.py
"""
Verification of universal obligations that call a ReLU network.

Branch and bound over the input box and ReLU phases: interval bound
propagation fixes stable neurons and prunes boxes that Kleene evaluation
already proves; the box is bisected while many neurons are unstable, after
that the most unstable neuron is split into its two phases. Once every
neuron has a phase the network is affine on the leaf and the leaf obligation
goes to qe_decide.
"""

from __future__ import annotations
import logging
import time
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Mapping, Optional, Tuple

from envguard.errors import DivisionByZero, NonlinearAtom, UnboundVariable
from envguard.kernel.formulas import (
    Compare,
    Implies,
    conj,
    evaluate_formula,
    formula_variables,
    substitute,
)
from envguard.kernel.terms import Const, Term, Var, evaluate_term, term_variables
from envguard.nnet.network import (
    interval_bounds,
    network_to_constraints,
    pattern_from_bounds,
)
from envguard.services.branch_and_bound import Prepared, complete_point, confirm_counterexample, prepare
from envguard.services.intervals import Interval, box_center, interval_term, kleene, split_box
from envguard.services.obligations import Obligation, QuantifierBlock
from envguard.services.solver import SolverOptions, SolverStats, Status, Verdict, qe_decide
from envguard.utils.logging import get_logger


@dataclass(frozen=True)
class _Problem:
    ob: Obligation
    prep: Prepared
    input_vars: Tuple[str, ...]
    options: SolverOptions
    deadline: float

    @property
    def net(self):
        return self.prep.network.net

    @property
    def inputs(self) -> Tuple[Term, ...]:
        return self.prep.network.inputs

    @property
    def outputs(self) -> Tuple[str, ...]:
        return self.prep.network.outputs


def _probe(problem: _Problem, point: Mapping[str, Fraction]) -> Optional[Dict[str, Fraction]]:
    """Exact check of one point of the box, network outputs computed exactly."""
    values = dict(point)
    try:
        xs = [evaluate_term(t, values) for t in problem.inputs]
        values.update(zip(problem.outputs, problem.net.evaluate(xs)))
        for x in formula_variables(problem.prep.formula):
            values.setdefault(x, Fraction(0))
        if evaluate_formula(problem.prep.formula, values):
            return None
        return confirm_counterexample(problem.ob, complete_point(problem.ob, problem.prep, point))
    except (UnboundVariable, DivisionByZero):
        return None


def _leaf_obligation(problem: _Problem, box: Mapping[str, Interval], pattern) -> Obligation:
    feasible, out_terms = network_to_constraints(problem.net, pattern, problem.inputs)
    mapping = dict(zip(problem.outputs, out_terms))
    in_box = [
        conj(Compare("<=", Const(iv.lo), Var(x)), Compare("<=", Var(x), Const(iv.hi)))
        for x, iv in sorted(box.items())
    ]
    premise = conj(*in_box, feasible, substitute(conj(*problem.prep.parts), mapping))
    matrix = Implies(premise, substitute(problem.prep.conclusion, mapping))
    names = tuple(sorted(formula_variables(matrix)))
    return Obligation(
        kind=problem.ob.kind,
        blocks=(QuantifierBlock("forall", names),) if names else (),
        matrix=matrix,
    )


def _step(task) -> Tuple[str, object, int]:
    """One work item: ("done" | "cex" | "split" | "unknown", payload, eliminations)."""
    problem, box, phases = task
    bounds = interval_bounds(problem.net, [interval_term(t, box) for t in problem.inputs], phases)
    if bounds is None:
        return "done", None, 0

    full_box = dict(box)
    full_box.update(zip(problem.outputs, bounds.outputs))
    if formula_variables(problem.prep.formula) <= set(full_box) and kleene(problem.prep.formula, full_box) is True:
        return "done", None, 0

    cex = _probe(problem, box_center(box))
    if cex is not None:
        return "cex", cex, 0

    unstable = bounds.unstable(problem.net, phases)
    if len(unstable) > problem.options.unstable_threshold:
        wide = [x for x in problem.input_vars if box[x].width > problem.options.split_width]
        if wide:
            x = max(wide, key=lambda y: (box[y].width, y))
            left, right = split_box(box, x)
            return "split", [(left, phases), (right, phases)], 0

    if unstable:
        def spread(ki):
            iv = bounds.pre[ki[0]][ki[1]]
            return min(-iv.lo, iv.hi), -ki[0], -ki[1]

        k, i = max(unstable, key=spread)
        on, off = dict(phases), dict(phases)
        on[(k, i)] = True
        off[(k, i)] = False
        return "split", [(box, on), (box, off)], 0

    leaf = _leaf_obligation(problem, box, pattern_from_bounds(problem.net, bounds, phases))
    try:
        verdict = qe_decide(leaf, problem.options, deadline=problem.deadline)
    except NonlinearAtom as e:
        return "unknown", f"nonlinear atom in network leaf: {e.subterm}", 0
    if verdict.status is Status.COUNTEREXAMPLE:
        point = {x: v for x, v in verdict.counterexample.items() if x not in problem.outputs}
        cex = confirm_counterexample(problem.ob, complete_point(problem.ob, problem.prep, point))
        if cex is None:
            return "unknown", "leaf counterexample failed exact confirmation", verdict.stats.eliminations
        return "cex", cex, verdict.stats.eliminations
    if verdict.status is Status.UNKNOWN:
        return "unknown", verdict.reason, verdict.stats.eliminations
    return "done", None, verdict.stats.eliminations


def verify_network(
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

    if ob.network is None or not ob.is_universal():
        return Verdict.unknown("network verification needs a universal obligation with a network", stats, "nnet")
    prep = prepare(ob, domain)
    if prep.vacuous:
        return Verdict.proven(stats, "nnet")

    input_vars = sorted(set().union(*(term_variables(t) for t in prep.network.inputs)))
    missing = prep.unbounded(input_vars)
    if missing:
        return Verdict.unknown(f"unbounded variable: {', '.join(missing)}", stats, "nnet")
    problem = _Problem(ob, prep, tuple(input_vars), options, deadline)

    batch = 4 * (pool.workers if pool is not None else 1)
    queue = deque([(prep.box(), {}, 0)])
    verdict: Optional[Verdict] = None
    while queue and verdict is None:
        if time.monotonic() > deadline:
            verdict = Verdict.unknown("timeout", stats, "nnet")
            break
        work = [queue.popleft() for _ in range(min(batch, len(queue)))]
        tasks = [(problem, box, phases) for box, phases, _ in work]
        results = pool.map_ordered(_step, tasks) if pool is not None else [_step(t) for t in tasks]
        for (box, phases, depth), (kind, payload, eliminations) in zip(work, results):
            stats.boxes_explored += 1
            stats.eliminations += eliminations
            stats.depth_max = max(stats.depth_max, depth)
            if kind == "cex":
                verdict = Verdict.found(payload, stats, "nnet")
                break
            if kind == "unknown":
                verdict = Verdict.unknown(payload, stats, "nnet")
                break
            if kind == "split":
                if depth >= options.depth_cap:
                    verdict = Verdict.unknown("depth cap reached", stats, "nnet")
                    break
                queue.extend((b, p, depth + 1) for b, p in payload)
    stats.wall_time = time.monotonic() - started
    logger.debug("nnet: %d work items, depth %d", stats.boxes_explored, stats.depth_max)
    return verdict or Verdict.proven(stats, "nnet")
