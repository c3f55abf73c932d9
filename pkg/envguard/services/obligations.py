# envguard/services/obligations.py
"""
Assembly of the real-arithmetic proof obligations.

Every state-like variable x gets four generations x_0..x_3: before the
perturbation's pre program, after it, after the controller, and after the
perturbation's post program. Monitors are instantiated between consecutive
generations; the quantifier prefix follows who picks each generation
(demon picks the controller output, angel picks the perturbations).
"""

from __future__ import annotations
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from envguard.errors import (
    HiddenStateVariable,
    MissingParameter,
    TemplateMismatch,
    UnboundVariable,
)
from envguard.hybrid.implementations import (
    Implementation,
    NetworkBinding,
    check_signature,
    implementation_formula,
)
from envguard.hybrid.model import EnvelopeModel
from envguard.hybrid.monitor import Monitor, post_name, synthesize_monitor
from envguard.hybrid.perturbations import AngelicPerturbation, identity_perturbation, match_noise_template
from envguard.hybrid.programs import bound_variables
from envguard.kernel.formulas import (
    TRUE,
    Compare,
    Formula,
    Implies,
    conj,
    conjuncts,
    evaluate_formula,
    exists,
    forall,
    formula_variables,
    substitute,
)
from envguard.kernel.terms import Add, Const, Term, Var, evaluate_term, term_variables
from envguard.utils.logging import get_logger


class ObligationKind(str, Enum):
    ROBUSTNESS = "robustness"
    SAFETY = "safety"
    REAL_VALUED = "real_valued"
    LIVENESS = "liveness"


@dataclass(frozen=True)
class QuantifierBlock:
    kind: str  # "forall" | "exists"
    variables: Tuple[str, ...]


@dataclass(frozen=True)
class Obligation:
    kind: ObligationKind
    blocks: Tuple[QuantifierBlock, ...]
    matrix: Formula
    # quantified name -> (base variable, generation)
    generations: Mapping[str, Tuple[str, int]] = field(default_factory=dict)
    provenance: Mapping[str, str] = field(default_factory=dict)
    network: Optional[NetworkBinding] = None
    parameters: Mapping[str, Fraction] = field(default_factory=dict)
    state_vars: Tuple[str, ...] = ()

    @property
    def formula(self) -> Formula:
        f = self.matrix
        for block in reversed(self.blocks):
            f = forall(block.variables, f) if block.kind == "forall" else exists(block.variables, f)
        return f

    def variables(self) -> Tuple[str, ...]:
        return tuple(x for b in self.blocks for x in b.variables)

    def is_universal(self) -> bool:
        return all(b.kind == "forall" for b in self.blocks)

    def block_index(self, name: str) -> Optional[int]:
        for i, b in enumerate(self.blocks):
            if name in b.variables:
                return i
        return None

    def base_of(self, name: str) -> Optional[str]:
        entry = self.generations.get(name)
        return entry[0] if entry else None

    def premise_conclusion(self) -> Tuple[Formula, Formula]:
        if isinstance(self.matrix, Implies):
            return self.matrix.left, self.matrix.right
        return TRUE, self.matrix

    def rename_back(self, valuation: Mapping[str, Fraction]) -> Dict[str, Fraction]:
        """Report names: generation 0 keeps the plain name, later ones get @k."""
        out: Dict[str, Fraction] = {}
        for name, value in valuation.items():
            entry = self.generations.get(name)
            if entry is None:
                out[name] = value
            elif entry[1] == 0:
                out[entry[0]] = value
            else:
                out[f"{entry[0]}@{entry[1]}"] = value
        return out

    def instantiate(self, valuation: Mapping[str, Fraction]) -> "Obligation":
        """Fix some quantified variables to values and drop them from the prefix."""
        mapping = {x: Const(Fraction(v)) for x, v in valuation.items()}
        blocks = []
        for b in self.blocks:
            keep = tuple(x for x in b.variables if x not in mapping)
            if keep:
                blocks.append(QuantifierBlock(b.kind, keep))
        network = self.network.substitute(mapping) if self.network is not None else None
        return replace(self, blocks=tuple(blocks), matrix=substitute(self.matrix, mapping), network=network)

    def __str__(self) -> str:
        return str(self.formula)


# -----------------------------
# Helpers
# -----------------------------
def generation_name(x: str, k: int) -> str:
    return f"{x}_{k}"


def _parameter_mapping(model: EnvelopeModel) -> Dict[str, Term]:
    return {k: (Const(v) if v is not None else Var(k)) for k, v in model.parameters.items()}


def _instantiate(
    formula: Formula,
    before: Mapping[str, Term],
    after: Mapping[str, Term],
    params: Mapping[str, Term],
    post_names: Iterable[str] = (),
) -> Formula:
    """Map pre-state names through `before`, x_post names through `after`."""
    posts = {post_name(x): x for x in post_names}
    mapping: Dict[str, Term] = {}
    missing: List[str] = []
    for y in formula_variables(formula):
        if y in posts:
            mapping[y] = after[posts[y]]
        elif y in before:
            mapping[y] = before[y]
        elif y in params:
            mapping[y] = params[y]
        else:
            missing.append(y)
    if missing:
        raise MissingParameter(missing)
    return substitute(formula, mapping)


def _monitor_between(m: Monitor, before, after, params) -> Formula:
    return _instantiate(m.formula, before, after, params, m.bound_vars)


class _Generations:
    """Renamed copies x_0..x_3 of the state-like variables."""

    def __init__(self, names: Sequence[str], avoid: Set[str]):
        self.names = list(names)
        self.avoid = set(avoid)
        self.origin: Dict[str, Tuple[str, int]] = {}
        self.fresh_by_step: List[List[str]] = []
        first = {x: Var(self._name(x, 0)) for x in self.names}
        self.fresh_by_step.append([t.name for t in first.values()])
        self.copies: List[Dict[str, Term]] = [first]

    def _name(self, x: str, k: int) -> str:
        name = generation_name(x, k)
        while name in self.avoid:
            name += "_"
        self.avoid.add(name)
        self.origin[name] = (x, k)
        return name

    def advance(self, bound: Iterable[str]) -> Dict[str, Term]:
        k = len(self.copies)
        nxt = dict(self.copies[-1])
        fresh = []
        for x in bound:
            name = self._name(x, k)
            nxt[x] = Var(name)
            fresh.append(name)
        self.copies.append(nxt)
        self.fresh_by_step.append(fresh)
        return nxt


def _blocks(kinds: Sequence[str], groups: Sequence[Sequence[str]], matrix: Formula) -> Tuple[QuantifierBlock, ...]:
    used = formula_variables(matrix)
    out: List[QuantifierBlock] = []
    for kind, names in zip(kinds, groups):
        keep = tuple(x for x in names if x in used)
        if not keep:
            continue
        if out and out[-1].kind == kind:
            out[-1] = QuantifierBlock(kind, out[-1].variables + keep)
        else:
            out.append(QuantifierBlock(kind, keep))
    return tuple(out)


def _state_like(model: EnvelopeModel, ap: AngelicPerturbation) -> List[str]:
    seen: Dict[str, None] = dict.fromkeys(model.state_vars)
    for hp in (ap.pre, model.ctl, ap.post):
        seen.update(dict.fromkeys(bound_variables(hp)))
    return list(seen)


def _setup(model: EnvelopeModel, ap: AngelicPerturbation):
    params = _parameter_mapping(model)
    gens = _Generations(_state_like(model, ap), set(params) | set(model.state_vars))
    g0 = gens.copies[0]
    g1 = gens.advance(bound_variables(ap.pre))
    g2 = gens.advance(bound_variables(model.ctl))
    g3 = gens.advance(bound_variables(ap.post))
    inv0 = _instantiate(model.inv, g0, {}, params)
    return params, gens, (g0, g1, g2, g3), inv0


def _provenance(model: EnvelopeModel, ap: Optional[AngelicPerturbation], impl=None, **extra) -> Dict[str, str]:
    out = {"model": model.name}
    if ap is not None:
        out["perturbation"] = ap.name
    if impl is not None:
        out["implementation"] = impl.name
    out.update(extra)
    return out


# -----------------------------
# Builders
# -----------------------------
def build_robustness(
    model: EnvelopeModel,
    ap: AngelicPerturbation,
    logger: Optional[logging.Logger] = None,
    kind: ObligationKind = ObligationKind.ROBUSTNESS,
) -> Obligation:
    """
    forall x0 forall x1 exists x2 forall x3:
      inv(x0) & pre(x0,x1) -> ctrl(x1,x2) & (post(x2,x3) -> ctrl(x0,x3))
    """
    logger = logger or get_logger(__name__)
    ctl_m = synthesize_monitor(model.ctl, logger)
    pre_m = synthesize_monitor(ap.pre, logger)
    post_m = synthesize_monitor(ap.post, logger)
    params, gens, (g0, g1, g2, g3), inv0 = _setup(model, ap)

    pre01 = _monitor_between(pre_m, g0, g1, params)
    ctrl12 = _monitor_between(ctl_m, g1, g2, params)
    post23 = _monitor_between(post_m, g2, g3, params)
    ctrl03 = _monitor_between(ctl_m, g0, g3, params)
    matrix = Implies(conj(inv0, pre01), conj(ctrl12, Implies(post23, ctrl03)))

    steps = gens.fresh_by_step
    blocks = _blocks(
        ("forall", "forall", "exists", "forall"),
        (model.symbolic_parameters() + steps[0], steps[1], steps[2], steps[3]),
        matrix,
    )
    logger.debug("%s obligation for %s/%s: %d block(s)", kind.value, model.name, ap.name, len(blocks))
    return Obligation(
        kind=kind,
        blocks=blocks,
        matrix=matrix,
        generations=dict(gens.origin),
        provenance=_provenance(model, ap),
        parameters=model.fixed_parameters(),
        state_vars=tuple(model.state_vars),
    )


def build_liveness(model: EnvelopeModel, logger: Optional[logging.Logger] = None) -> Obligation:
    return build_robustness(model, identity_perturbation(), logger, kind=ObligationKind.LIVENESS)


def _network_block(binding: Optional[NetworkBinding]) -> Tuple[str, ...]:
    return binding.outputs if binding is not None else ()


def build_safety_under_perturbation(
    model: EnvelopeModel,
    ap: AngelicPerturbation,
    impl: Implementation,
    logger: Optional[logging.Logger] = None,
) -> Obligation:
    """forall x0..x3: inv(x0) & pre(x0,x1) & impl(x1,x2) & post(x2,x3) -> ctrl(x0,x3)"""
    logger = logger or get_logger(__name__)
    check_signature(impl, model.ctl)
    ctl_m = synthesize_monitor(model.ctl, logger)
    pre_m = synthesize_monitor(ap.pre, logger)
    post_m = synthesize_monitor(ap.post, logger)
    params, gens, (g0, g1, g2, g3), inv0 = _setup(model, ap)

    pre01 = _monitor_between(pre_m, g0, g1, params)
    impl12, binding = _implementation_between(impl, g1, g2, params)
    post23 = _monitor_between(post_m, g2, g3, params)
    ctrl03 = _monitor_between(ctl_m, g0, g3, params)
    matrix = Implies(conj(inv0, pre01, impl12, post23), ctrl03)

    steps = gens.fresh_by_step
    names = model.symbolic_parameters() + steps[0] + steps[1] + steps[2] + steps[3] + list(_network_block(binding))
    return Obligation(
        kind=ObligationKind.SAFETY,
        blocks=_blocks(("forall",), (names,), matrix),
        matrix=matrix,
        generations=dict(gens.origin),
        provenance=_provenance(model, ap, impl),
        network=binding,
        parameters=model.fixed_parameters(),
        state_vars=tuple(model.state_vars),
    )


def _implementation_between(impl: Implementation, before, after, params):
    inputs = dict(params)
    inputs.update(before)
    missing = [x for x in impl.input_variables() if x not in inputs]
    if missing:
        raise MissingParameter(missing)
    return implementation_formula(impl, inputs, after)


def versaille_form(model: EnvelopeModel, impl: Implementation, logger: Optional[logging.Logger] = None) -> Obligation:
    """Unperturbed real-valued check: inv(x0) & impl(x0,x2) -> ctrl(x0,x2)."""
    logger = logger or get_logger(__name__)
    check_signature(impl, model.ctl)
    ctl_m = synthesize_monitor(model.ctl, logger)
    ap = identity_perturbation()
    params, gens, (g0, g1, g2, g3), inv0 = _setup(model, ap)
    impl02, binding = _implementation_between(impl, g0, g2, params)
    matrix = Implies(conj(inv0, impl02), _monitor_between(ctl_m, g0, g2, params))
    steps = gens.fresh_by_step
    names = model.symbolic_parameters() + steps[0] + steps[2] + list(_network_block(binding))
    return Obligation(
        kind=ObligationKind.REAL_VALUED,
        blocks=_blocks(("forall",), (names,), matrix),
        matrix=matrix,
        generations=dict(gens.origin),
        provenance=_provenance(model, None, impl),
        network=binding,
        parameters=model.fixed_parameters(),
        state_vars=tuple(model.state_vars),
    )


# -----------------------------
# Bounded-noise templates
# -----------------------------
def _evaluate_delta(t: Term, model: EnvelopeModel) -> Fraction:
    try:
        return evaluate_term(t, model.fixed_parameters())
    except UnboundVariable as e:
        raise MissingParameter([e.name]) from None


def match_bounded_template(model: EnvelopeModel, ap: AngelicPerturbation) -> Tuple[Dict[str, Fraction], Dict[str, Fraction]]:
    """Input and output noise bounds of a built-in bounded template."""
    found = match_noise_template(ap)
    if found is None:
        raise TemplateMismatch(f"{ap.name} is not a bounded sensor/output noise template")
    inputs = {x: _evaluate_delta(d, model) for x, d in found.inputs.items()}
    outputs = {x: _evaluate_delta(d, model) for x, d in found.outputs.items()}
    return inputs, outputs


def _noise_bound(eps: str, delta: Fraction) -> Formula:
    return conj(Compare("<=", Const(-delta), Var(eps)), Compare("<=", Var(eps), Const(delta)))


def build_simplified_bounded(
    model: EnvelopeModel,
    delta_in: Mapping[str, Fraction],
    delta_out: Mapping[str, Fraction],
    impl: Optional[Implementation] = None,
    logger: Optional[logging.Logger] = None,
) -> Obligation:
    """
    Reduced forms with the noise inlined. Robustness:
      forall x forall eps_in exists x_post forall eps_out:
        inv(x) & |eps_in| <= d_in ->
          ctrl(x + eps_in, x_post) & (|eps_out| <= d_out -> ctrl(x, x_post + eps_out))
    Safety (impl given), all universal:
      inv(x) & |eps_in| <= d_in & impl(x + eps_in, x_post) & |eps_out| <= d_out -> ctrl(x, x_post + eps_out)
    """
    logger = logger or get_logger(__name__)
    outputs = bound_variables(model.ctl)
    for x in delta_in:
        if x not in model.state_vars:
            raise TemplateMismatch(f"input noise on non-state variable {x}")
    for x in delta_out:
        if x not in outputs:
            raise TemplateMismatch(f"output noise on {x}, which the controller does not bind")
    for x, d in list(delta_in.items()) + list(delta_out.items()):
        if Fraction(d) < 0:
            raise TemplateMismatch(f"negative noise bound for {x}: {d}")

    params = _parameter_mapping(model)
    state = {x: Var(x) for x in model.state_vars}
    eps_in = {x: f"eps_{x}" for x in delta_in}
    eps_out = {x: f"eps_{x}" for x in delta_out}
    post = {x: Var(post_name(x)) for x in outputs}
    sensed = dict(state)
    sensed.update({x: Add(Var(x), Var(e)) for x, e in eps_in.items()})
    acted = dict(post)
    acted.update({x: Add(Var(post_name(x)), Var(e)) for x, e in eps_out.items()})

    ctl_m = synthesize_monitor(model.ctl, logger)
    inv = _instantiate(model.inv, state, {}, params)
    in_bounds = conj(*(_noise_bound(e, Fraction(delta_in[x])) for x, e in eps_in.items()))
    out_bounds = conj(*(_noise_bound(e, Fraction(delta_out[x])) for x, e in eps_out.items()))
    generations: Dict[str, Tuple[str, int]] = {x: (x, 0) for x in model.state_vars}
    generations.update({e: (e, 1) for e in eps_in.values()})
    generations.update({post_name(x): (x, 2) for x in outputs})
    generations.update({e: (e, 3) for e in eps_out.values()})
    symbolic = model.symbolic_parameters()

    if impl is None:
        matrix = Implies(
            conj(inv, in_bounds),
            conj(
                _monitor_between(ctl_m, sensed, post, params),
                Implies(out_bounds, _monitor_between(ctl_m, state, acted, params)),
            ),
        )
        blocks = _blocks(
            ("forall", "forall", "exists", "forall"),
            (symbolic + list(model.state_vars), list(eps_in.values()), [post_name(x) for x in outputs], list(eps_out.values())),
            matrix,
        )
        return Obligation(
            kind=ObligationKind.ROBUSTNESS,
            blocks=blocks,
            matrix=matrix,
            generations=generations,
            provenance=_provenance(model, None, form="simplified"),
            parameters=model.fixed_parameters(),
            state_vars=tuple(model.state_vars),
        )

    check_signature(impl, model.ctl)
    impl_f, binding = _implementation_between(impl, sensed, post, params)
    matrix = Implies(conj(inv, in_bounds, impl_f, out_bounds), _monitor_between(ctl_m, state, acted, params))
    names = (
        symbolic
        + list(model.state_vars)
        + list(eps_in.values())
        + [post_name(x) for x in outputs]
        + list(eps_out.values())
        + list(_network_block(binding))
    )
    return Obligation(
        kind=ObligationKind.SAFETY,
        blocks=_blocks(("forall",), (names,), matrix),
        matrix=matrix,
        generations=generations,
        provenance=_provenance(model, None, impl, form="simplified"),
        network=binding,
        parameters=model.fixed_parameters(),
        state_vars=tuple(model.state_vars),
    )


# -----------------------------
# Post-processing
# -----------------------------
def project_auxiliaries(ob: Obligation, hidden: Iterable[str]) -> Obligation:
    """
    Remove perturbation-internal copies (e.g. a saved sensor value) that the
    premise defines by an equation over variables quantified no deeper.
    """
    hidden = set(hidden)
    clash = hidden & set(ob.state_vars)
    if clash:
        raise HiddenStateVariable(sorted(clash))
    if not hidden:
        return ob
    premise, conclusion = ob.premise_conclusion()
    parts = list(conjuncts(premise))
    blocks = [list(b.variables) for b in ob.blocks]
    for i, b in enumerate(ob.blocks):
        for h in list(b.variables):
            if ob.base_of(h) not in hidden:
                continue
            for part in parts:
                t = _definition_of(part, h)
                if t is None:
                    continue
                depth_ok = all((ob.block_index(y) is None) or ob.block_index(y) <= i for y in term_variables(t))
                if not depth_ok:
                    continue
                mapping = {h: t}
                parts = [substitute(p, mapping) for p in parts if p is not part]
                conclusion = substitute(conclusion, mapping)
                blocks[i].remove(h)
                break
    matrix = Implies(conj(*parts), conclusion) if isinstance(ob.matrix, Implies) else conclusion
    new_blocks = tuple(QuantifierBlock(b.kind, tuple(v)) for b, v in zip(ob.blocks, blocks) if v)
    return replace(ob, blocks=new_blocks, matrix=matrix)


def _definition_of(part: Formula, h: str) -> Optional[Term]:
    if not (isinstance(part, Compare) and part.op == "="):
        return None
    if part.left == Var(h) and h not in term_variables(part.right):
        return part.right
    if part.right == Var(h) and h not in term_variables(part.left):
        return part.left
    return None


def concrete_violation(ob: Obligation, model: EnvelopeModel, counterexample: Mapping[str, Fraction]) -> bool:
    """Whether the generation-0 part of a counterexample satisfies the model's pre."""
    state = dict(model.fixed_parameters())
    for name, value in counterexample.items():
        entry = ob.generations.get(name)
        if entry is not None and entry[1] == 0:
            state[entry[0]] = Fraction(value)
        elif name in model.parameters:
            state[name] = Fraction(value)
    try:
        return evaluate_formula(model.pre, state)
    except UnboundVariable:
        return False
