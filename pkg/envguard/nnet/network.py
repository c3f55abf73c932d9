# envguard/nnet/network.py
"""
Feedforward ReLU networks over exact rationals: evaluation, activation
patterns, interval bound propagation and the per-pattern linear encoding.
"""

from __future__ import annotations
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from envguard.errors import DimensionMismatch
from envguard.kernel.formulas import Compare, Formula, conj
from envguard.kernel.terms import ZERO, Term, Var, as_linear, linear_term
from envguard.services.intervals import Interval

ACTIVATIONS = ("relu", "identity")

# per ReLU layer, one bool per neuron (True = active, pre-activation >= 0)
ActivationPattern = Tuple[Tuple[bool, ...], ...]
# (layer index, neuron index) -> fixed phase
Phases = Mapping[Tuple[int, int], bool]


@dataclass(frozen=True)
class Layer:
    weights: Tuple[Tuple[Fraction, ...], ...]  # rows = outputs
    biases: Tuple[Fraction, ...]
    activation: str = "relu"

    @property
    def rows(self) -> int:
        return len(self.weights)

    @property
    def cols(self) -> int:
        return len(self.weights[0]) if self.weights else 0


@dataclass(frozen=True)
class ReluNetwork:
    layers: Tuple[Layer, ...]
    name: str = ""
    provenance: str = ""

    def __post_init__(self):
        if not self.layers:
            raise DimensionMismatch("network has no layers")
        for k, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise DimensionMismatch(f"layer {k}: unknown activation {layer.activation!r}")
            if len(layer.biases) != layer.rows or any(len(r) != layer.cols for r in layer.weights):
                raise DimensionMismatch(f"layer {k}: ragged weights or bias of the wrong length")
            if k and layer.cols != self.layers[k - 1].rows:
                raise DimensionMismatch(
                    f"layer {k} takes {layer.cols} inputs but layer {k - 1} has {self.layers[k - 1].rows} outputs"
                )
        if self.layers[-1].activation != "identity":
            raise DimensionMismatch("final layer must be identity")

    @property
    def input_dim(self) -> int:
        return self.layers[0].cols

    @property
    def output_dim(self) -> int:
        return self.layers[-1].rows

    @property
    def parameter_count(self) -> int:
        return sum(layer.rows * layer.cols + layer.rows for layer in self.layers)

    def relu_layers(self) -> List[int]:
        return [k for k, layer in enumerate(self.layers) if layer.activation == "relu"]

    def evaluate(self, x: Sequence) -> List[Fraction]:
        return evaluate(self, x)


def _affine(layer: Layer, x: Sequence[Fraction]) -> List[Fraction]:
    return [sum((w * v for w, v in zip(row, x)), b) for row, b in zip(layer.weights, layer.biases)]


def _check_input(net: ReluNetwork, x: Sequence) -> List[Fraction]:
    if len(x) != net.input_dim:
        raise DimensionMismatch(f"network takes {net.input_dim} inputs, got {len(x)}")
    return [Fraction(v) for v in x]


def evaluate(net: ReluNetwork, x: Sequence) -> List[Fraction]:
    values = _check_input(net, x)
    for layer in net.layers:
        values = _affine(layer, values)
        if layer.activation == "relu":
            values = [max(v, Fraction(0)) for v in values]
    return values


def realized_pattern(net: ReluNetwork, x: Sequence) -> ActivationPattern:
    values = _check_input(net, x)
    pattern: List[Tuple[bool, ...]] = []
    for layer in net.layers:
        pre = _affine(layer, values)
        if layer.activation == "relu":
            pattern.append(tuple(v >= 0 for v in pre))
            values = [max(v, Fraction(0)) for v in pre]
        else:
            values = pre
    return tuple(pattern)


# -----------------------------
# Interval bound propagation
# -----------------------------
@dataclass(frozen=True)
class Bounds:
    pre: Tuple[Tuple[Interval, ...], ...]  # per layer, pre-activation enclosures
    outputs: Tuple[Interval, ...]

    def unstable(self, net: ReluNetwork, phases: Optional[Phases] = None) -> List[Tuple[int, int]]:
        phases = phases or {}
        out = []
        for k in net.relu_layers():
            for i, iv in enumerate(self.pre[k]):
                if (k, i) not in phases and iv.lo < 0 < iv.hi:
                    out.append((k, i))
        return out


def _scaled(w: Fraction, iv: Interval) -> Interval:
    a, b = w * iv.lo, w * iv.hi
    return Interval(min(a, b), max(a, b))


def interval_bounds(net: ReluNetwork, inputs: Sequence[Interval], phases: Optional[Phases] = None) -> Optional[Bounds]:
    """
    Enclosures of every pre-activation and of the outputs over the input box.
    A fixed phase clips the pre-activation to its side of zero; None if a fixed
    phase is impossible on the box.
    """
    if len(inputs) != net.input_dim:
        raise DimensionMismatch(f"network takes {net.input_dim} inputs, got {len(inputs)}")
    phases = phases or {}
    values = list(inputs)
    pre_all: List[Tuple[Interval, ...]] = []
    for k, layer in enumerate(net.layers):
        pre: List[Interval] = []
        for i, (row, b) in enumerate(zip(layer.weights, layer.biases)):
            acc = Interval.point(b)
            for w, iv in zip(row, values):
                if w:
                    acc = acc + _scaled(w, iv)
            phase = phases.get((k, i))
            if phase is True:
                if acc.hi < 0:
                    return None
                acc = Interval(max(acc.lo, Fraction(0)), acc.hi)
            elif phase is False:
                if acc.lo > 0:
                    return None
                acc = Interval(acc.lo, min(acc.hi, Fraction(0)))
            pre.append(acc)
        pre_all.append(tuple(pre))
        if layer.activation == "relu":
            values = [Interval(max(iv.lo, Fraction(0)), max(iv.hi, Fraction(0))) for iv in pre]
        else:
            values = pre
    return Bounds(tuple(pre_all), tuple(values))


def pattern_from_bounds(net: ReluNetwork, bounds: Bounds, phases: Optional[Phases] = None) -> Optional[ActivationPattern]:
    """The pattern fixed by `phases` and stable neurons; None while any ReLU is undecided."""
    phases = phases or {}
    pattern = []
    for k in net.relu_layers():
        bits = []
        for i, iv in enumerate(bounds.pre[k]):
            if (k, i) in phases:
                bits.append(phases[(k, i)])
            elif iv.lo >= 0:
                bits.append(True)
            elif iv.hi <= 0:
                bits.append(False)
            else:
                return None
        pattern.append(tuple(bits))
    return tuple(pattern)


# -----------------------------
# Linear encoding of one pattern
# -----------------------------
LinearForm = Tuple[Dict[str, Fraction], Fraction]


def _combine(row: Sequence[Fraction], bias: Fraction, forms: Sequence[LinearForm]) -> LinearForm:
    coeffs: Dict[str, Fraction] = {}
    const = Fraction(bias)
    for w, (c, k) in zip(row, forms):
        if not w:
            continue
        const += w * k
        for x, a in c.items():
            coeffs[x] = coeffs.get(x, Fraction(0)) + w * a
    return {x: a for x, a in coeffs.items() if a}, const


def network_to_constraints(
    net: ReluNetwork,
    pattern: ActivationPattern,
    inputs: Optional[Sequence[Term]] = None,
) -> Tuple[Formula, List[Term]]:
    """
    Feasibility polytope of an activation pattern and the affine output terms
    valid on it. Inputs default to variables x0, x1, ...; they must be affine.
    """
    if inputs is None:
        inputs = [Var(f"x{i}") for i in range(net.input_dim)]
    if len(inputs) != net.input_dim:
        raise DimensionMismatch(f"network takes {net.input_dim} inputs, got {len(inputs)}")
    relu_layers = net.relu_layers()
    if len(pattern) != len(relu_layers):
        raise DimensionMismatch(f"pattern covers {len(pattern)} ReLU layers, network has {len(relu_layers)}")

    forms: List[LinearForm] = [as_linear(t) for t in inputs]
    constraints: List[Formula] = []
    bits_of = dict(zip(relu_layers, pattern))
    for k, layer in enumerate(net.layers):
        pre = [_combine(row, b, forms) for row, b in zip(layer.weights, layer.biases)]
        if layer.activation != "relu":
            forms = pre
            continue
        bits = bits_of[k]
        if len(bits) != layer.rows:
            raise DimensionMismatch(f"layer {k}: pattern has {len(bits)} bits for {layer.rows} neurons")
        forms = []
        for (c, const), active in zip(pre, bits):
            t = linear_term(c, const)
            if active:
                constraints.append(Compare(">=", t, ZERO))
                forms.append((c, const))
            else:
                constraints.append(Compare("<=", t, ZERO))
                forms.append(({}, Fraction(0)))
    outputs = [linear_term(c, k) for c, k in forms]
    return conj(*constraints), outputs
