# envguard/hybrid/implementations.py
"""
Concrete controller implementations and their before-after predicates.

An implementation reads the controller's input state (pre-controller values of
the state variables) and produces the values of the controller's bound
variables. Closed forms give one term per output; networks go through an
output binding (regression output or argmax over a fixed action list).
"""

from __future__ import annotations
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from envguard.errors import DimensionMismatch, SignatureMismatch
from envguard.hybrid.programs import HybridProgram, bound_variables
from envguard.kernel.formulas import Compare, Formula, conj, disj
from envguard.kernel.terms import Const, Term, Var, substitute_term, term_variables

NN_OUT = "nn_out"


def nn_out_name(i: int) -> str:
    return f"{NN_OUT}_{i}"


# -----------------------------
# Implementations
# -----------------------------
@dataclass(frozen=True)
class ClosedForm:
    name: str
    outputs: Mapping[str, Term]

    def input_variables(self) -> Tuple[str, ...]:
        seen: Dict[str, None] = {}
        for t in self.outputs.values():
            for x in sorted(term_variables(t)):
                seen.setdefault(x, None)
        return tuple(seen)


@dataclass(frozen=True)
class Regression:
    var: str


@dataclass(frozen=True)
class ArgmaxCases:
    var: str
    actions: Tuple[Term, ...]


OutputBinding = Union[Regression, ArgmaxCases]


@dataclass(frozen=True)
class NetworkImpl:
    name: str
    net: object  # envguard.nnet.network.ReluNetwork (imported lazily to keep hybrid free of nnet)
    input_vars: Tuple[str, ...]
    binding: OutputBinding

    def __post_init__(self):
        if len(self.input_vars) != self.net.input_dim:
            raise DimensionMismatch(
                f"{self.name}: network takes {self.net.input_dim} inputs, {len(self.input_vars)} given"
            )
        if isinstance(self.binding, Regression) and self.net.output_dim != 1:
            raise DimensionMismatch(f"{self.name}: regression binding needs one output, network has {self.net.output_dim}")
        if isinstance(self.binding, ArgmaxCases) and self.net.output_dim != len(self.binding.actions):
            raise DimensionMismatch(
                f"{self.name}: {len(self.binding.actions)} actions for {self.net.output_dim} network outputs"
            )

    def input_variables(self) -> Tuple[str, ...]:
        return self.input_vars

    @property
    def output_var(self) -> str:
        return self.binding.var


Implementation = Union[ClosedForm, NetworkImpl]


def output_variables(impl: Implementation) -> Tuple[str, ...]:
    if isinstance(impl, ClosedForm):
        return tuple(impl.outputs)
    return (impl.output_var,)


def check_signature(impl: Implementation, ctl: HybridProgram) -> None:
    """The implementation must produce exactly the controller's bound variables."""
    produced = set(output_variables(impl))
    expected = set(bound_variables(ctl))
    if produced != expected:
        raise SignatureMismatch(
            f"{impl.name} produces {{{', '.join(sorted(produced))}}} "
            f"but the controller binds {{{', '.join(sorted(expected))}}}"
        )


# -----------------------------
# Before-after predicates
# -----------------------------
@dataclass(frozen=True)
class NetworkBinding:
    """Network call inside an obligation: nn_out_i are the exact network outputs on `inputs`."""

    net: object
    inputs: Tuple[Term, ...]
    outputs: Tuple[str, ...] = field(default=())

    def substitute(self, mapping: Mapping[str, Term]) -> "NetworkBinding":
        return NetworkBinding(self.net, tuple(substitute_term(t, mapping) for t in self.inputs), self.outputs)


def argmax_selector(i: int, outs: Sequence[Term]) -> Formula:
    """
    Output i wins. Strict against earlier outputs and non-strict against later
    ones, so ties go to the lowest index exactly as in `argmax_index`.
    """
    parts: List[Formula] = []
    for j, other in enumerate(outs):
        if j < i:
            parts.append(Compare(">", outs[i], other))
        elif j > i:
            parts.append(Compare(">=", outs[i], other))
    return conj(*parts)


def implementation_formula(
    impl: Implementation,
    inputs: Mapping[str, Term],
    outputs: Mapping[str, Term],
) -> Tuple[Formula, Optional[NetworkBinding]]:
    """
    impl(x, x+) with the input names mapped through `inputs` and each output
    variable mapped to its post-controller term through `outputs`.
    """
    if isinstance(impl, ClosedForm):
        eqs = [Compare("=", outputs[x], substitute_term(t, inputs)) for x, t in impl.outputs.items()]
        return conj(*eqs), None

    outs = tuple(nn_out_name(i) for i in range(impl.net.output_dim))
    binding = NetworkBinding(
        impl.net,
        tuple(substitute_term(Var(x), inputs) for x in impl.input_vars),
        outs,
    )
    target = outputs[impl.output_var]
    if isinstance(impl.binding, Regression):
        return Compare("=", target, Var(outs[0])), binding
    out_terms = [Var(o) for o in outs]
    cases = [
        conj(argmax_selector(i, out_terms), Compare("=", target, substitute_term(a, inputs)))
        for i, a in enumerate(impl.binding.actions)
    ]
    return disj(*cases), binding


def argmax_index(values: Sequence) -> int:
    best = 0
    for i, y in enumerate(values):
        if y > values[best]:
            best = i
    return best


def bind_parameters(impl: Implementation, params: Mapping[str, Fraction]) -> Implementation:
    """Closed form with fixed parameters substituted; networks are returned unchanged."""
    if not isinstance(impl, ClosedForm) or not params:
        return impl
    mapping = {k: Const(Fraction(v)) for k, v in params.items()}
    return ClosedForm(impl.name, {x: substitute_term(t, mapping) for x, t in impl.outputs.items()})
