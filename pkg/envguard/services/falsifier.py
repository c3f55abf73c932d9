# envguard/services/falsifier.py
"""
Sampling falsifier: a cheap search for counterexamples before (or instead
of) a full proof. Every hit is confirmed exactly, so a returned point is
always a real counterexample; finding nothing proves nothing.
"""

from __future__ import annotations
import logging
from fractions import Fraction
from itertools import islice
from typing import Dict, Iterator, Mapping, Optional, Set, Tuple

import numpy as np

from envguard.errors import DivisionByZero, NonlinearAtom, ResourceLimit, UnboundVariable
from envguard.kernel.formulas import conjuncts, evaluate_formula
from envguard.services import fourier_motzkin as fm
from envguard.services.branch_and_bound import (
    Bound,
    complete_point,
    confirm_counterexample,
    domain_bound,
    prepare,
    single_bound,
    tighten,
)
from envguard.services.intervals import Interval, box_corners
from envguard.services.obligations import Obligation
from envguard.utils.logging import get_logger
from envguard.utils.rationals import sample_rational

DEFAULT_RADIUS = Fraction(16)
BATCH = 256


def _close(bound: Bound, radius: Fraction) -> Interval:
    lo, hi = bound
    if lo is None and hi is None:
        return Interval(-radius, radius)
    if lo is None:
        return Interval(hi - 2 * radius, hi)
    if hi is None:
        return Interval(lo, lo + 2 * radius)
    return Interval(lo, hi)


def _points(box: Mapping[str, Interval], samples: int, rng: np.random.Generator) -> Iterator[Dict[str, Fraction]]:
    names = sorted(box)
    yield from box_corners(box, limit=min(64, samples))
    # one coordinate on a face, the rest random
    for x in names:
        for end in (box[x].lo, box[x].hi):
            point = {y: sample_rational(rng, box[y].lo, box[y].hi) for y in names}
            point[x] = end
            yield point
    while True:
        yield {y: sample_rational(rng, box[y].lo, box[y].hi) for y in names}


def falsify(
    ob: Obligation,
    domain: Mapping[str, Interval],
    samples: int,
    rng: np.random.Generator,
    radius: Fraction = DEFAULT_RADIUS,
    pool=None,
    logger: Optional[logging.Logger] = None,
) -> Optional[Dict[str, Fraction]]:
    """A confirmed counterexample found by sampling, or None. The hit is the same with or without a pool."""
    logger = logger or get_logger(__name__)
    if ob.is_universal():
        return _falsify_universal(ob, domain, samples, rng, radius, pool)
    return _falsify_alternating(ob, domain, samples, rng, radius, logger)


def _first_counterexample(task) -> Optional[Dict[str, Fraction]]:
    ob, prep, points = task
    formula = prep.formula
    for point in points:
        try:
            if prep.network is None and evaluate_formula(formula, point):
                continue
            values = complete_point(ob, prep, point)
        except (DivisionByZero, UnboundVariable):
            continue
        cex = confirm_counterexample(ob, values)
        if cex is not None:
            return cex
    return None


def _falsify_universal(ob, domain, samples, rng, radius, pool) -> Optional[Dict[str, Fraction]]:
    prep = prepare(ob, domain)
    if prep.vacuous:
        return None
    names = prep.variables()
    box = {x: _close(prep.bounds.get(x, (None, None)), radius) for x in names}
    points = islice(_points(box, samples, rng), samples)
    if pool is None or pool.workers == 1:
        return _first_counterexample((ob, prep, points))
    points = list(points)
    batches = [(ob, prep, points[i : i + BATCH]) for i in range(0, len(points), BATCH)]
    return pool.first_hit(_first_counterexample, batches)


def _falsify_alternating(ob, domain, samples, rng, radius, logger) -> Optional[Dict[str, Fraction]]:
    if ob.blocks[0].kind != "forall":
        return None
    outer = ob.blocks[0].variables
    premise, _ = ob.premise_conclusion()
    bounds: Dict[str, Bound] = {x: domain_bound(ob, x, domain) for x in outer}
    for part in conjuncts(premise):
        found = single_bound(part)
        if found is not None and found[0] in bounds:
            bounds[found[0]] = tighten(bounds[found[0]], found[1])
    try:
        box = {x: _close(b, radius) for x, b in bounds.items()}
    except ValueError:
        return None
    seen: Set[Tuple[Tuple[str, Fraction], ...]] = set()
    for point in islice(_points(box, samples, rng), samples):
        key = tuple(sorted(point.items()))
        if key in seen:
            continue
        seen.add(key)
        try:
            if not fm.decide_closed(ob.instantiate(point).formula):
                return point
        except NonlinearAtom:
            logger.debug("falsifier: nonlinear alternation, giving up")
            return None
        except (ResourceLimit, DivisionByZero):
            continue
    return None
