# envguard/fixedpoint/tuning.py
"""
Mixed-precision tuning.

Starting from the smallest uniform width whose analyzed error meets the
target, word lengths are lowered by delta debugging: ids are grouped by
layer, each group tries to drop `step` bits at once, groups that break the
target are halved, singletons that break it are given up. Steps go 8, 4, 2, 1.
Candidates of one round are analyzed in parallel against the same current
assignment; results are consumed in submission order.
"""

from __future__ import annotations
import logging
import time
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict

from envguard.errors import Infeasible, RangeOverflow
from envguard.fixedpoint.analysis import Analysis, CostWeights, analyze, assign_formats, cost, uniform_widths
from envguard.fixedpoint.formats import MAX_WIDTH
from envguard.fixedpoint.program import StraightLineProgram
from envguard.services.intervals import Interval
from envguard.utils.logging import get_logger

STEPS = (8, 4, 2, 1)


class TuningOptions(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    min_width: int = 4
    max_width: int = MAX_WIDTH
    weights: CostWeights = CostWeights()


@dataclass(frozen=True)
class TuningResult:
    program: StraightLineProgram
    analysis: Analysis
    total_error: Fraction
    cost: Fraction
    target: Fraction
    uniform_width: int
    uniform_cost: Fraction
    iterations: int
    wall_time: float

    def widths(self) -> Dict[str, int]:
        return {ident: fmt.width for ident, fmt in self.program.formats.items()}


def _evaluate(task) -> Optional[Tuple[Fraction, Fraction]]:
    """(total error, cost) of one width assignment, None if some value cannot be placed."""
    prog, domain, widths, weights = task
    try:
        formatted = assign_formats(prog, domain, widths)
        analysis = analyze(formatted, domain)
    except RangeOverflow:
        return None
    return analysis.total_error, cost(formatted, weights)


def _lowered(widths: Mapping[str, int], chunk: Tuple[str, ...], step: int, floor: int) -> Dict[str, int]:
    out = dict(widths)
    for ident in chunk:
        out[ident] = max(floor, out[ident] - step)
    return out


def tune(
    prog: StraightLineProgram,
    domain: Mapping[str, Interval],
    target,
    options: Optional[TuningOptions] = None,
    pool=None,
    logger: Optional[logging.Logger] = None,
) -> TuningResult:
    logger = logger or get_logger(__name__)
    options = options or TuningOptions()
    target = Fraction(target)
    started = time.monotonic()
    if target < 0:
        raise Infeasible(f"negative error target {target}")

    def run(candidates: List[Dict[str, int]]):
        tasks = [(prog, domain, w, options.weights) for w in candidates]
        return pool.map_ordered(_evaluate, tasks) if pool is not None else [_evaluate(t) for t in tasks]

    def feasible(res) -> bool:
        return res is not None and res[0] <= target

    # smallest uniform width meeting the target
    uniform, current, current_cost = None, None, None
    for q in range(options.min_width, options.max_width + 1):
        widths = uniform_widths(prog, q)
        res = run([widths])[0]
        logger.debug("uniform width %d: %s", q, "overflow" if res is None else f"error {float(res[0]):.3g}")
        if feasible(res):
            uniform, current, current_cost = q, widths, res[1]
            break
    if uniform is None:
        raise Infeasible(f"no uniform width up to {options.max_width} meets error target {target}")
    uniform_cost = current_cost

    batch = 4 * (pool.workers if pool is not None else 1)
    iterations = 0
    chunks = [tuple(ids) for ids in prog.layers().values() if ids]
    for step in STEPS:
        queue = deque(chunks)
        while queue:
            work, candidates = [], []
            while queue and len(work) < batch:
                chunk = queue.popleft()
                cand = _lowered(current, chunk, step, options.min_width)
                if cand != current:
                    work.append(chunk)
                    candidates.append(cand)
            if not work:
                break
            iterations += 1
            accepted = False
            for chunk, cand, res in zip(work, candidates, run(candidates)):
                if feasible(res):
                    if not accepted:
                        current, current_cost, accepted = cand, res[1], True
                    queue.append(chunk)
                elif len(chunk) > 1:
                    half = len(chunk) // 2
                    queue.extend((chunk[:half], chunk[half:]))
        logger.debug("step %d done: cost %s", step, current_cost)

    program = assign_formats(prog, domain, current)
    analysis = analyze(program, domain)
    result = TuningResult(
        program=program,
        analysis=analysis,
        total_error=analysis.total_error,
        cost=cost(program, options.weights),
        target=target,
        uniform_width=uniform,
        uniform_cost=uniform_cost,
        iterations=iterations,
        wall_time=time.monotonic() - started,
    )
    logger.info(
        "tuned %d ops: uniform width %d (cost %s) -> cost %s, error bound %.3g <= %.3g",
        len(prog.ops), uniform, uniform_cost, result.cost, float(result.total_error), float(target),
    )
    return result
