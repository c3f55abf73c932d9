# envguard/services/solver.py
"""
Deciding obligations.

qe_decide handles linear obligations exactly by quantifier elimination;
bb_decide (branch_and_bound) handles nonlinear universal obligations over a
bounded domain; verify_network (nnet.verify) handles obligations that call a
ReLU network. `decide` routes between them and turns solver-internal
conditions into Unknown verdicts instead of exceptions.
"""

from __future__ import annotations
import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Dict, Literal, Mapping, Optional

from pydantic import BaseModel, ConfigDict

from envguard.errors import DivisionByZero, NonlinearAtom, ResourceLimit, UnboundVariable
from envguard.kernel.formulas import evaluate_formula, formula_variables
from envguard.services import fourier_motzkin as fm
from envguard.services.obligations import Obligation
from envguard.utils.logging import get_logger


class Status(str, Enum):
    PROVEN = "proven"
    COUNTEREXAMPLE = "counterexample"
    UNKNOWN = "unknown"


@dataclass
class SolverStats:
    eliminations: int = 0
    atoms_peak: int = 0
    boxes_explored: int = 0
    depth_max: int = 0
    wall_time: float = 0.0


@dataclass(frozen=True)
class Verdict:
    status: Status
    counterexample: Optional[Dict[str, Fraction]] = None
    reason: Optional[str] = None
    stats: SolverStats = field(default_factory=SolverStats)
    engine: str = ""

    @classmethod
    def proven(cls, stats: SolverStats, engine: str) -> "Verdict":
        return cls(Status.PROVEN, stats=stats, engine=engine)

    @classmethod
    def found(cls, valuation: Mapping[str, Fraction], stats: SolverStats, engine: str) -> "Verdict":
        return cls(Status.COUNTEREXAMPLE, counterexample=dict(valuation), stats=stats, engine=engine)

    @classmethod
    def unknown(cls, reason: str, stats: Optional[SolverStats] = None, engine: str = "") -> "Verdict":
        return cls(Status.UNKNOWN, reason=reason, stats=stats or SolverStats(), engine=engine)


class SolverOptions(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    engine: Literal["auto", "qe", "bb"] = "auto"
    depth_cap: int = 40
    split_width: Fraction = Fraction(1, 100000)
    atoms_peak: int = 100_000
    timeout_seconds: float = 600.0
    falsify_samples: int = 2000
    # network verification splits the input box while more ReLUs than this are unstable
    unstable_threshold: int = 6
    seed: int = 0

    def deadline(self) -> float:
        return time.monotonic() + self.timeout_seconds


def _fill_free(matrix, valuation: Mapping[str, Fraction]) -> Dict[str, Fraction]:
    full = dict(valuation)
    for x in formula_variables(matrix):
        full.setdefault(x, Fraction(0))
    return full


def qe_decide(
    ob: Obligation,
    options: Optional[SolverOptions] = None,
    deadline: Optional[float] = None,
    logger: Optional[logging.Logger] = None,
) -> Verdict:
    """
    Exact decision for linear obligations. The outermost universal block is
    kept free, everything inside is eliminated, and a model of the negated
    residue is the counterexample. Raises NonlinearAtom or ResourceLimit.
    """
    logger = logger or get_logger(__name__)
    options = options or SolverOptions()
    started = time.monotonic()
    ctx = fm.EliminationContext(atoms_cap=options.atoms_peak, deadline=deadline or options.deadline())
    stats = SolverStats()

    if ob.is_universal():
        outer = ob.variables()
        residue = fm.linearize(ob.matrix)
    else:
        outer = ob.blocks[0].variables if ob.blocks[0].kind == "forall" else ()
        rest = replace(ob, blocks=ob.blocks[1:]) if outer else ob
        residue = fm.eliminate(fm.linearize(rest.formula), ctx)

    verdict = None
    for conjunct in fm.dnf(fm.negate_qf(residue), ctx):
        model = fm.find_model(conjunct, ctx)
        if model is None:
            continue
        point = {x: model.get(x, Fraction(0)) for x in outer}
        if _confirmed(ob, point):
            verdict = ("cex", point)
        else:
            verdict = ("unconfirmed", point)
        break

    stats.eliminations = ctx.eliminations
    stats.atoms_peak = ctx.atoms_peak
    stats.wall_time = time.monotonic() - started
    if verdict is None:
        return Verdict.proven(stats, "qe")
    if verdict[0] == "cex":
        return Verdict.found(verdict[1], stats, "qe")
    logger.warning("qe: counterexample candidate %s failed exact confirmation", verdict[1])
    return Verdict.unknown("unconfirmed counterexample", stats, "qe")


def _confirmed(ob: Obligation, point: Mapping[str, Fraction]) -> bool:
    try:
        if ob.is_universal():
            return not evaluate_formula(ob.matrix, _fill_free(ob.matrix, point))
        return not fm.decide_closed(ob.instantiate(point).formula)
    except (UnboundVariable, DivisionByZero, ValueError):
        return False


def decide(
    ob: Obligation,
    options: Optional[SolverOptions] = None,
    domain=None,
    pool=None,
    logger: Optional[logging.Logger] = None,
) -> Verdict:
    """Route an obligation to the right engine; never raises for solver-internal conditions."""
    from envguard.nnet.verify import verify_network
    from envguard.services.branch_and_bound import bb_decide

    logger = logger or get_logger(__name__)
    options = options or SolverOptions()
    domain = domain or {}
    deadline = options.deadline()
    try:
        if ob.network is not None:
            verdict = verify_network(ob, domain, options, pool=pool, deadline=deadline, logger=logger)
        elif options.engine == "bb":
            verdict = bb_decide(ob, domain, options, pool=pool, deadline=deadline, logger=logger)
        else:
            try:
                verdict = qe_decide(ob, options, deadline=deadline, logger=logger)
            except NonlinearAtom as e:
                if options.engine == "qe":
                    verdict = Verdict.unknown(f"nonlinear atom: {e.subterm}", engine="qe")
                elif ob.is_universal():
                    logger.debug("nonlinear obligation, rerouting to branch and bound")
                    verdict = bb_decide(ob, domain, options, pool=pool, deadline=deadline, logger=logger)
                else:
                    verdict = Verdict.unknown("nonlinear alternation", engine="qe")
    except ResourceLimit as e:
        verdict = Verdict.unknown(e.reason)
    except DivisionByZero as e:
        verdict = Verdict.unknown(str(e))

    if verdict.status is Status.UNKNOWN:
        logger.warning("%s obligation %s: unknown (%s)", ob.kind.value, dict(ob.provenance), verdict.reason)
    else:
        logger.info("%s obligation %s: %s", ob.kind.value, dict(ob.provenance), verdict.status.value)
    return verdict
