# envguard/services/pipeline.py
"""
Stage runners, the end-to-end pipeline and the robot reproduction suite.

Stages run in order monitor -> robustness -> safety -> tuning -> emit and
stop at the first stage that does not pass: robustness is necessary for
safety, and tuning only makes sense for a controller proven safe under the
perturbation whose output bound becomes the error target. Stages exchange
nothing but their serialized records.
"""

from __future__ import annotations
import json
import platform
import sys
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from envguard import __version__
from envguard.connectors.model_dsl import ModelFile, NetworkDecl, PipelineDecl, parse_model
from envguard.deps import DATA_DIR, Toolchain
from envguard.errors import EnvguardError, MismatchedExpectation, StageError, TemplateMismatch
from envguard.fixedpoint.analysis import analyze, assign_formats, uniform_widths
from envguard.fixedpoint.codegen import emit, parse_emitted
from envguard.fixedpoint.program import StraightLineProgram, lower
from envguard.fixedpoint.simulator import simulate
from envguard.fixedpoint.tuning import TuningResult, tune
from envguard.hybrid.implementations import Implementation, bind_parameters, output_variables
from envguard.hybrid.model import EnvelopeModel
from envguard.hybrid.monitor import check_monitor_soundness, synthesize_monitor
from envguard.hybrid.perturbations import AngelicPerturbation, saved_name
from envguard.kernel.formulas import Iff, formula_variables, substitute
from envguard.kernel.syntax import parse_formula, print_formula
from envguard.kernel.terms import Const
from envguard.models import ExpectationRow, Report, StageResult, TuningRecord, VerdictRecord
from envguard.services.falsifier import falsify
from envguard.services.intervals import Interval
from envguard.services.obligations import (
    Obligation,
    ObligationKind,
    QuantifierBlock,
    build_liveness,
    build_robustness,
    build_safety_under_perturbation,
    concrete_violation,
    match_bounded_template,
    project_auxiliaries,
    versaille_form,
)
from envguard.services.report_store import ReportStore
from envguard.services.solver import Status, Verdict, decide, qe_decide
from envguard.utils.rationals import format_fraction, sample_rational, to_fraction

ROBOT_MODEL = DATA_DIR / "robot.gdm"
ROBOT_EXPECTATIONS = DATA_DIR / "robot_expectations.json"

Domain = Dict[str, Interval]


@contextmanager
def stage(name: str, tc: Toolchain) -> Iterator[None]:
    """Tag envguard errors raised inside a stage with the stage name."""
    try:
        yield
    except StageError:
        raise
    except EnvguardError as e:
        tc.logger.exception("stage %s failed", name)
        raise StageError(name, e) from e


# -----------------------------
# Verification stages
# -----------------------------
def _hidden(model: EnvelopeModel, ap: AngelicPerturbation) -> List[str]:
    bound = set(ap.bound_variables())
    return [saved_name(x) for x in model.state_vars if saved_name(x) in bound]


def _record(ob: Obligation, verdict: Verdict, model: EnvelopeModel) -> VerdictRecord:
    concrete = None
    if verdict.status is Status.COUNTEREXAMPLE:
        concrete = concrete_violation(ob, model, verdict.counterexample)
    return VerdictRecord.from_verdict(verdict, ob, concrete)


def _decide_stage(name: str, ob: Obligation, model: EnvelopeModel, domain: Optional[Domain], tc: Toolchain, **details):
    verdict = decide(ob, tc.solver, domain=domain, pool=tc.pool, logger=tc.logger)
    record = _record(ob, verdict, model)
    tc.store.put("obligation", str(ob) + "\n")
    artifact = tc.store.put("verdict", json.dumps(record.model_dump(mode="json"), sort_keys=True) + "\n", ".json")
    result = StageResult(
        stage=name,
        ok=verdict.status is Status.PROVEN,
        verdict=record,
        artifact=artifact,
        details={k: v for k, v in details.items() if v is not None},
    )
    return result, verdict


def run_monitor(model: EnvelopeModel, tc: Toolchain) -> StageResult:
    with stage("monitor", tc):
        m = synthesize_monitor(model.ctl, tc.logger)
        report = check_monitor_soundness(m, tc.monitor_samples, tc.rng(), model.fixed_parameters(), tc.logger)
        text = print_formula(m.formula)
        artifact = tc.store.put("monitor", text + "\n")
        if not report.ok:
            tc.logger.warning(
                "monitor of %s: %d execution and %d replay violation(s)",
                model.name, len(report.execution_violations), len(report.replay_violations),
            )
        return StageResult(
            stage="monitor",
            ok=report.ok,
            artifact=artifact,
            details={
                "pre_vars": list(m.pre_vars),
                "post_vars": list(m.post_vars),
                "formula": text,
                "executions": report.executions,
                "replays": report.replays,
                "skipped": report.skipped,
            },
        )


def _reduces_to_liveness(model: EnvelopeModel, ap: AngelicPerturbation) -> Optional[bool]:
    try:
        d_in, d_out = match_bounded_template(model, ap)
    except EnvguardError:
        return None
    return all(d == 0 for d in list(d_in.values()) + list(d_out.values()))


def run_robustness(
    model: EnvelopeModel, ap: AngelicPerturbation, tc: Toolchain, domain: Optional[Domain] = None
) -> Tuple[StageResult, Verdict]:
    with stage("robustness", tc):
        ob = project_auxiliaries(build_robustness(model, ap, tc.logger), _hidden(model, ap))
        return _decide_stage(
            "robustness", ob, model, domain, tc,
            perturbation=ap.name, reduces_to_liveness=_reduces_to_liveness(model, ap),
        )


def run_liveness(model: EnvelopeModel, tc: Toolchain) -> Tuple[StageResult, Verdict]:
    with stage("liveness", tc):
        return _decide_stage("liveness", build_liveness(model, tc.logger), model, None, tc)


def run_safety(
    model: EnvelopeModel, ap: AngelicPerturbation, impl: Implementation, domain: Domain, tc: Toolchain
) -> Tuple[StageResult, Verdict]:
    with stage("safety", tc):
        ob = build_safety_under_perturbation(model, ap, impl, tc.logger)
        ob = project_auxiliaries(ob, _hidden(model, ap))
        return _decide_stage("safety", ob, model, domain, tc, perturbation=ap.name, implementation=impl.name)


def run_real_valued(model: EnvelopeModel, impl: Implementation, domain: Domain, tc: Toolchain) -> Tuple[StageResult, Verdict]:
    with stage("real_valued", tc):
        ob = versaille_form(model, impl, tc.logger)
        return _decide_stage("real_valued", ob, model, domain, tc, implementation=impl.name)


# -----------------------------
# Fixed-point stages
# -----------------------------
def error_target(model: EnvelopeModel, ap: AngelicPerturbation, impl: Implementation) -> Fraction:
    """Output noise bound the perturbation grants the implementation's output."""
    _, d_out = match_bounded_template(model, ap)
    bounds = [d_out[x] for x in output_variables(impl) if x in d_out]
    if not bounds:
        raise TemplateMismatch(f"{ap.name} puts no bound on the outputs of {impl.name}")
    return min(bounds)


def input_domain(model: EnvelopeModel, ap: Optional[AngelicPerturbation], domain: Domain) -> Domain:
    """The implementation sees sensed values: widen the domain by the input noise."""
    if ap is None:
        return dict(domain)
    try:
        d_in, _ = match_bounded_template(model, ap)
    except TemplateMismatch:
        return dict(domain)
    return {x: Interval(iv.lo - d_in.get(x, 0), iv.hi + d_in.get(x, 0)) for x, iv in domain.items()}


def lower_implementation(model: EnvelopeModel, impl: Implementation, domain: Domain) -> StraightLineProgram:
    return lower(bind_parameters(impl, model.fixed_parameters()), domain)


def sample_inputs(prog: StraightLineProgram, domain: Domain, n: int, rng: np.random.Generator) -> List[List[Fraction]]:
    return [[sample_rational(rng, domain[x].lo, domain[x].hi, max_bits=12) for x in prog.inputs] for _ in range(n)]


def run_tuning(
    model: EnvelopeModel,
    ap: AngelicPerturbation,
    impl: Implementation,
    domain: Domain,
    tc: Toolchain,
    target: Optional[Fraction] = None,
    samples: Optional[int] = None,
) -> Tuple[StageResult, Optional[TuningResult]]:
    with stage("tuning", tc):
        target = error_target(model, ap, impl) if target is None else Fraction(target)
        box = input_domain(model, ap, domain)
        prog = lower_implementation(model, impl, box)
        result = tune(prog, box, target, tc.tuner, pool=tc.pool, logger=tc.logger)
        worst = Fraction(0)
        for x in sample_inputs(result.program, box, samples or tc.solver.falsify_samples, tc.rng(1)):
            worst = max(worst, simulate(result.program, x).realized_error)
        record = TuningRecord.from_result(result)
        artifact = tc.store.put("tuning", json.dumps(record.model_dump(mode="json"), sort_keys=True) + "\n", ".json")
        return (
            StageResult(
                stage="tuning",
                ok=result.total_error <= target and worst <= result.total_error,
                tuning=record,
                artifact=artifact,
                details={"max_realized_error": format_fraction(worst)},
            ),
            result,
        )


def run_emit(result: TuningResult, tc: Toolchain, check_points: Sequence[Sequence[Fraction]] = ()) -> StageResult:
    with stage("emit", tc):
        text = emit(result.program)
        reread = parse_emitted(text)
        agree = all(simulate(result.program, x).outputs == simulate(reread, x).outputs for x in check_points)
        artifact = tc.store.put("program", text, ".fxp")
        return StageResult(
            stage="emit",
            ok=agree,
            artifact=artifact,
            details={"lines": text.count("\n"), "checked_points": len(check_points)},
        )


# -----------------------------
# Reports
# -----------------------------
def _sha256(path: Path) -> str:
    return ReportStore.digest(path.read_bytes())


def new_report(mf: ModelFile, selections: Dict[str, str]) -> Report:
    inputs: Dict[str, str] = {}
    source = Path(mf.source)
    if source.is_file():
        inputs[source.name] = _sha256(source)
    for decl in mf.implementations.values():
        if isinstance(decl, NetworkDecl):
            inputs[decl.path.name] = _sha256(decl.path)
    return Report(
        tool_version=__version__,
        environment={
            "python": platform.python_version(),
            "implementation": sys.implementation.name,
            "numpy": np.__version__,
        },
        inputs=dict(sorted(inputs.items())),
        selections=selections,
    )


def run_pipeline(
    mf: ModelFile,
    selection: Union[str, PipelineDecl],
    tc: Toolchain,
    overrides: Optional[Dict[str, Optional[Fraction]]] = None,
) -> Report:
    sel = mf.pipeline(selection) if isinstance(selection, str) else selection
    report = new_report(mf, {"ctl": sel.ctl, "angel": sel.angel, "impl": sel.impl, "domain": sel.domain})
    model = mf.model(sel.ctl, overrides)
    ap = mf.perturbation(sel.angel)
    domain = mf.domain(sel.domain)
    with stage("safety", tc):
        impl = mf.implementation(sel.impl, tc.logger)
    tc.logger.info("pipeline %s: %s / %s / %s over %s", sel.name, sel.ctl, sel.angel, sel.impl, sel.domain)

    def done(result: StageResult) -> bool:
        report.stages.append(result)
        if not result.ok:
            tc.logger.warning("pipeline %s stopped after %s", sel.name, result.stage)
        return result.ok

    if not done(run_monitor(model, tc)):
        return report
    if not done(run_robustness(model, ap, tc, domain)[0]):
        return report
    if not done(run_safety(model, ap, impl, domain, tc)[0]):
        return report
    tuning, result = run_tuning(model, ap, impl, domain, tc, target=sel.target)
    if not done(tuning):
        return report
    points = sample_inputs(result.program, input_domain(model, ap, domain), min(1000, tc.solver.falsify_samples), tc.rng(2))
    done(run_emit(result, tc, points))
    return report


# -----------------------------
# Robot reproduction suite
# -----------------------------
def load_expectations(path: Union[str, Path] = ROBOT_EXPECTATIONS) -> List[ExpectationRow]:
    rows = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ExpectationRow.model_validate(r) for r in rows]


def _monitor_equivalence(model: EnvelopeModel, expected: str, tc: Toolchain) -> Tuple[StageResult, Verdict]:
    m = synthesize_monitor(model.ctl, tc.logger)
    params = {k: Const(v) for k, v in model.fixed_parameters().items()}
    matrix = substitute(Iff(m.formula, parse_formula(expected)), params)
    names = tuple(sorted(formula_variables(matrix)))
    ob = Obligation(
        kind=ObligationKind.REAL_VALUED,
        blocks=(QuantifierBlock("forall", names),) if names else (),
        matrix=matrix,
        provenance={"model": model.name, "check": "monitor equivalence"},
    )
    verdict = qe_decide(ob, tc.solver, logger=tc.logger)
    record = VerdictRecord.from_verdict(verdict, ob)
    return StageResult(stage="monitor", ok=verdict.status is Status.PROVEN, verdict=record,
                       details={"formula": print_formula(m.formula)}), verdict


def _check_witness(row: ExpectationRow, record: Optional[VerdictRecord]) -> List[str]:
    problems = []
    cex = (record.counterexample if record else None) or {}
    for name, (lo, hi) in row.witness.items():
        if name not in cex:
            problems.append(f"{row.id}: counterexample has no value for {name}")
            continue
        value = to_fraction(cex[name])
        if not to_fraction(lo) <= value <= to_fraction(hi):
            problems.append(f"{row.id}: {name} = {cex[name]} outside [{lo}, {hi}]")
    return problems


def _tuning_row(mf: ModelFile, row: ExpectationRow, model: EnvelopeModel, tc: Toolchain) -> Tuple[StageResult, List[str]]:
    impl = mf.implementation(row.impl, tc.logger)
    ap = mf.perturbation(row.angel) if row.angel else None
    box = input_domain(model, ap, mf.domain(row.domain))
    problems: List[str] = []
    if row.uniform_width is not None:
        with stage("tuning", tc):
            prog = lower_implementation(model, impl, box)
            formatted = assign_formats(prog, box, uniform_widths(prog, row.uniform_width))
            bound = analyze(formatted, box).total_error
        if row.max_error is not None and bound > to_fraction(row.max_error):
            problems.append(f"{row.id}: uniform width {row.uniform_width} error bound {format_fraction(bound)} > {row.max_error}")
        return StageResult(stage="tuning", ok=not problems, details={"total_error": format_fraction(bound)}), problems

    target = to_fraction(row.target) if row.target is not None else None
    result, tuned = run_tuning(model, ap, impl, mf.domain(row.domain), tc, target=target)
    if not result.ok:
        problems.append(f"{row.id}: tuning did not meet its target or its error bound")
    if row.max_width is not None and result.tuning.max_width > row.max_width:
        problems.append(f"{row.id}: widest format {result.tuning.max_width} bits > {row.max_width}")
    points = sample_inputs(tuned.program, box, min(1000, tc.solver.falsify_samples), tc.rng(2))
    emitted = run_emit(tuned, tc, points)
    if not emitted.ok:
        problems.append(f"{row.id}: emitted program disagrees with the simulator")
    return result, problems


def check_row(mf: ModelFile, row: ExpectationRow, tc: Toolchain) -> Tuple[StageResult, List[str]]:
    overrides = {k: to_fraction(v) for k, v in row.params.items()}
    model = mf.model(row.ctl, overrides)
    tc.logger.info("expectation %s", row.id)

    if row.group == "tuning":
        result, problems = _tuning_row(mf, row, model, tc)
        result.details["id"] = row.id
        result.ok = not problems
        return result, problems

    domain = mf.domain(row.domain) if row.domain else None
    if row.group == "monitor":
        with stage("monitor", tc):
            result, verdict = _monitor_equivalence(model, row.formula or "", tc)
    elif row.group == "liveness":
        result, verdict = run_liveness(model, tc)
    elif row.group == "robustness":
        result, verdict = run_robustness(model, mf.perturbation(row.angel), tc, domain)
    elif row.group == "real_valued":
        result, verdict = run_real_valued(model, mf.implementation(row.impl, tc.logger), domain, tc)
    else:
        impl = mf.implementation(row.impl, tc.logger)
        result, verdict = run_safety(model, mf.perturbation(row.angel), impl, domain, tc)

    problems: List[str] = []
    if verdict.status.value != row.expect:
        problems.append(f"{row.id}: expected {row.expect}, got {verdict.status.value}"
                        + (f" ({verdict.reason})" if verdict.reason else ""))
    elif row.expect == "counterexample":
        problems.extend(_check_witness(row, result.verdict))
    if row.group == "network" and verdict.status is Status.PROVEN:
        ob = build_safety_under_perturbation(model, mf.perturbation(row.angel), mf.implementation(row.impl), tc.logger)
        hit = falsify(ob, domain or {}, tc.cross_check_samples, tc.rng(3), pool=tc.pool, logger=tc.logger)
        if hit is not None:
            problems.append(f"{row.id}: proven, but sampling found a violation at {ob.rename_back(hit)}")
    result.details["id"] = row.id
    # in the suite a stage is ok when it met its expectation
    result.ok = not problems
    return result, problems


def reproduce_robot_suite(
    tc: Toolchain,
    only: Optional[Sequence[str]] = None,
    model_path: Union[str, Path] = ROBOT_MODEL,
    expectations_path: Union[str, Path] = ROBOT_EXPECTATIONS,
) -> Report:
    """Check every pinned expectation; raises MismatchedExpectation (carrying the report) on any miss."""
    mf = parse_model(model_path, tc.logger)
    rows = load_expectations(expectations_path)
    if only:
        rows = [r for r in rows if r.group in only or r.id in only]
    report = new_report(mf, {"suite": "robot", "only": ",".join(only or [])})
    for row in rows:
        result, problems = check_row(mf, row, tc)
        report.stages.append(result)
        report.mismatches.extend(problems)
    tc.logger.info("robot suite: %d expectation(s), %d mismatch(es)", len(rows), len(report.mismatches))
    if report.mismatches:
        err = MismatchedExpectation(report.mismatches)
        err.report = report
        raise err
    return report
