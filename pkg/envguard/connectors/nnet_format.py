# envguard/connectors/nnet_format.py
"""
Reader and writer for the `nnet-ratio v1` network format.

    nnet-ratio v1
    inputs 2
    outputs 1
    layer 8 2 relu
    <8*2 weights, row-major> <8 biases>
    layer 1 8 identity
    ...

Numbers are exact decimals ("0.25", "-3") or ratios ("1/3"), separated by
whitespace; line breaks inside a layer body are free. "#" starts a comment.
"""

from __future__ import annotations
import logging
from fractions import Fraction
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

from envguard.errors import DimensionMismatch, FormatError
from envguard.nnet.network import ACTIVATIONS, Layer, ReluNetwork
from envguard.utils.logging import get_logger
from envguard.utils.rationals import format_fraction

HEADER = "nnet-ratio v1"


def _words(text: str) -> Iterator[Tuple[int, str]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        for word in line.split():
            yield lineno, word


class _Reader:
    def __init__(self, text: str):
        self.words = list(_words(text))
        self.pos = 0
        self.last_line = text.count("\n") + 1

    def line(self) -> int:
        return self.words[self.pos][0] if self.pos < len(self.words) else self.last_line

    def word(self, what: str) -> str:
        if self.pos >= len(self.words):
            raise FormatError(self.last_line, f"unexpected end of file, expected {what}")
        w = self.words[self.pos][1]
        self.pos += 1
        return w

    def keyword(self, kw: str) -> None:
        line = self.line()
        w = self.word(kw)
        if w != kw:
            raise FormatError(line, f"expected {kw!r}, found {w!r}")

    def integer(self, what: str) -> int:
        line = self.line()
        w = self.word(what)
        if not w.isdigit() or int(w) <= 0:
            raise FormatError(line, f"expected a positive integer for {what}, found {w!r}")
        return int(w)

    def number(self, what: str) -> Fraction:
        line = self.line()
        w = self.word(what)
        try:
            return Fraction(w)
        except (ValueError, ZeroDivisionError):
            raise FormatError(line, f"bad number {w!r} for {what}") from None

    def done(self) -> bool:
        return self.pos >= len(self.words)


def parse_network(text: str, name: str = "", provenance: str = "") -> ReluNetwork:
    r = _Reader(text)
    for kw in HEADER.split():
        r.keyword(kw)
    r.keyword("inputs")
    n_in = r.integer("inputs")
    r.keyword("outputs")
    n_out = r.integer("outputs")

    layers: List[Layer] = []
    while not r.done():
        line = r.line()
        r.keyword("layer")
        rows = r.integer("rows")
        cols = r.integer("cols")
        activation = r.word("activation")
        if activation not in ACTIVATIONS:
            raise FormatError(line, f"unknown activation {activation!r}")
        expected_cols = layers[-1].rows if layers else n_in
        if cols != expected_cols:
            raise DimensionMismatch(f"line {line}: layer takes {cols} inputs, previous width is {expected_cols}")
        weights = tuple(
            tuple(r.number(f"weight [{i}][{j}]") for j in range(cols)) for i in range(rows)
        )
        biases = tuple(r.number(f"bias [{i}]") for i in range(rows))
        layers.append(Layer(weights, biases, activation))

    if not layers:
        raise FormatError(r.line(), "network has no layers")
    if layers[-1].rows != n_out:
        raise DimensionMismatch(f"header declares {n_out} outputs, last layer has {layers[-1].rows}")
    if layers[-1].activation != "identity":
        raise FormatError(r.line(), "last layer must be identity")
    return ReluNetwork(tuple(layers), name=name, provenance=provenance)


def load_network(path: Union[str, Path], logger: Optional[logging.Logger] = None) -> ReluNetwork:
    logger = logger or get_logger(__name__)
    path = Path(path)
    net = parse_network(path.read_text(encoding="utf-8"), name=path.stem, provenance=str(path))
    logger.debug("loaded %s: %d -> %d, %d parameters", path.name, net.input_dim, net.output_dim, net.parameter_count)
    return net


def dump_network(net: ReluNetwork) -> str:
    lines = [HEADER, f"inputs {net.input_dim}", f"outputs {net.output_dim}"]
    for layer in net.layers:
        lines.append(f"layer {layer.rows} {layer.cols} {layer.activation}")
        for row in layer.weights:
            lines.append(" ".join(format_fraction(w) for w in row))
        lines.append(" ".join(format_fraction(b) for b in layer.biases))
    return "\n".join(lines) + "\n"
