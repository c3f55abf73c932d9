# envguard/kernel/syntax.py
"""
Textual syntax for terms and formulas (ASCII rendering of the usual notation).

    term     := sum
    sum      := product (("+" | "-") product)*
    product  := unary (("*" | "/") unary)*
    unary    := "-" unary | power
    power    := primary ("^" ["("] ["-"] INT [")"])?
    primary  := NUMBER | IDENT | "(" term ")"

    formula  := equiv
    equiv    := implies ("<->" implies)*
    implies  := disj ("->" implies)?            (right associative)
    disj     := conj ("|" conj)*
    conj     := unary_f ("&" unary_f)*
    unary_f  := "!" unary_f | "\\forall" IDENT unary_f | "\\exists" IDENT unary_f
              | "true" | "false" | comparison | "(" formula ")"
    comparison := term OP term (OP term)*       (chains become conjunctions)

Identifiers are [A-Za-z_][A-Za-z0-9_]* followed by optional primes. `#` and
`//` start comments that run to the end of the line.
"""

from __future__ import annotations
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

from envguard.errors import ParseError
from envguard.kernel.formulas import (
    And,
    Bottom,
    Compare,
    Exists,
    Forall,
    Formula,
    Iff,
    Implies,
    Not,
    Or,
    Top,
)
from envguard.kernel.terms import Add, Const, Div, Mul, Neg, Pow, Sub, Term, Var

# -----------------------------
# Lexer
# -----------------------------
_PUNCT = [
    "<->", "->", "<=", ">=", "!=", ":=", "++",
    "<", ">", "=", "+", "-", "*", "/", "^", "(", ")", "{", "}", "[", "]",
    ",", ";", "!", "&", "|", "?",
]
_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>(\#|//)[^\n]*)
  | (?P<number>\d+(\.\d+)?)
  | (?P<quant>\\forall|\\exists)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*'*)
  | (?P<string>"[^"\n]*")
  | (?P<punct>""" + "|".join(re.escape(p) for p in _PUNCT) + r""")
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str     # number | ident | string | punct | quant | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(line, pos - line_start + 1, "a token", text[pos])
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class TokenStream:
    """Cursor over a token list with backtracking support."""

    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0

    @classmethod
    def from_text(cls, text: str) -> "TokenStream":
        return cls(tokenize(text))

    def peek(self, offset: int = 0) -> Token:
        i = min(self.pos + offset, len(self.tokens) - 1)
        return self.tokens[i]

    def at(self, *texts: str) -> bool:
        tok = self.peek()
        return tok.kind in ("punct", "ident", "quant") and tok.text in texts

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def accept(self, *texts: str) -> Optional[Token]:
        if self.at(*texts):
            return self.next()
        return None

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if not self.at(text):
            raise self.error(repr(text))
        return self.next()

    def expect_kind(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise self.error(what)
        return self.next()

    def error(self, expected: str) -> ParseError:
        tok = self.peek()
        return ParseError(tok.line, tok.col, expected, tok.text or "end of input")


KEYWORDS = {"true", "false"}
_COMPARISON_OPS = ("<=", ">=", "!=", "<", ">", "=")


# -----------------------------
# Term parser
# -----------------------------
def parse_term_tokens(ts: TokenStream) -> Term:
    left = _product(ts)
    while ts.at("+", "-"):
        op = ts.next().text
        right = _product(ts)
        left = Add(left, right) if op == "+" else Sub(left, right)
    return left


def _product(ts: TokenStream) -> Term:
    left = _unary(ts)
    while ts.at("*", "/"):
        op = ts.next().text
        right = _unary(ts)
        left = Mul(left, right) if op == "*" else Div(left, right)
    return left


def _unary(ts: TokenStream) -> Term:
    if ts.accept("-"):
        return Neg(_unary(ts))
    return _power(ts)


def _power(ts: TokenStream) -> Term:
    base = _primary(ts)
    if ts.accept("^"):
        paren = ts.accept("(") is not None
        negative = ts.accept("-") is not None
        tok = ts.expect_kind("number", "an integer exponent")
        if "." in tok.text:
            raise ParseError(tok.line, tok.col, "an integer exponent", tok.text)
        n = int(tok.text)
        if paren:
            ts.expect(")")
        return Pow(base, -n if negative else n)
    return base


def _primary(ts: TokenStream) -> Term:
    tok = ts.peek()
    if tok.kind == "number":
        ts.next()
        return Const(Fraction(tok.text))
    if tok.kind == "ident" and tok.text not in KEYWORDS:
        ts.next()
        return Var(tok.text)
    if ts.accept("("):
        t = parse_term_tokens(ts)
        ts.expect(")")
        return t
    raise ts.error("a term")


# -----------------------------
# Formula parser
# -----------------------------
def parse_formula_tokens(ts: TokenStream) -> Formula:
    left = _implies(ts)
    while ts.accept("<->"):
        left = Iff(left, _implies(ts))
    return left


def _implies(ts: TokenStream) -> Formula:
    left = _disj(ts)
    if ts.accept("->"):
        return Implies(left, _implies(ts))
    return left


def _disj(ts: TokenStream) -> Formula:
    parts = [_conj(ts)]
    while ts.accept("|"):
        parts.append(_conj(ts))
    return parts[0] if len(parts) == 1 else Or(tuple(parts))


def _conj(ts: TokenStream) -> Formula:
    parts = [parse_unary_formula_tokens(ts)]
    while ts.accept("&"):
        parts.append(parse_unary_formula_tokens(ts))
    return parts[0] if len(parts) == 1 else And(tuple(parts))


def parse_unary_formula_tokens(ts: TokenStream) -> Formula:
    if ts.accept("!"):
        return Not(parse_unary_formula_tokens(ts))
    tok = ts.peek()
    if tok.kind == "quant":
        ts.next()
        name = ts.expect_kind("ident", "a variable name").text
        body = parse_unary_formula_tokens(ts)
        return Forall(name, body) if tok.text == "\\forall" else Exists(name, body)
    if tok.kind == "ident" and tok.text == "true":
        ts.next()
        return Top()
    if tok.kind == "ident" and tok.text == "false":
        ts.next()
        return Bottom()
    if ts.at("("):
        # "(" opens either a parenthesized term of a comparison or a formula
        start = ts.pos
        try:
            return _comparison(ts)
        except ParseError as term_error:
            ts.pos = start
            try:
                ts.expect("(")
                inner = parse_formula_tokens(ts)
                ts.expect(")")
                return inner
            except ParseError as formula_error:
                furthest = max(term_error, formula_error, key=lambda e: (e.line, e.col))
                raise furthest from None
    return _comparison(ts)


def _comparison(ts: TokenStream) -> Formula:
    left = parse_term_tokens(ts)
    if not ts.at(*_COMPARISON_OPS):
        raise ts.error("a comparison operator")
    parts = []
    while ts.at(*_COMPARISON_OPS):
        op = ts.next().text
        right = parse_term_tokens(ts)
        parts.append(Compare(op, left, right))
        left = right
    return parts[0] if len(parts) == 1 else And(tuple(parts))


def parse_term(text: str) -> Term:
    ts = TokenStream.from_text(text)
    t = parse_term_tokens(ts)
    if ts.peek().kind != "eof":
        raise ts.error("end of input")
    return t


def parse_formula(text: str) -> Formula:
    ts = TokenStream.from_text(text)
    f = parse_formula_tokens(ts)
    if ts.peek().kind != "eof":
        raise ts.error("end of input")
    return f


# -----------------------------
# Printer
# -----------------------------
# binding strength: higher binds tighter
_T_SUM, _T_PRODUCT, _T_UNARY, _T_POWER, _T_ATOM = 1, 2, 3, 4, 5


def _term_level(t: Term) -> int:
    if isinstance(t, (Add, Sub)):
        return _T_SUM
    if isinstance(t, (Mul, Div)):
        return _T_PRODUCT
    if isinstance(t, Neg):
        return _T_UNARY
    if isinstance(t, Pow):
        return _T_POWER
    if isinstance(t, Const) and (t.value < 0 or t.value.denominator != 1):
        return _T_ATOM  # printed with its own parentheses
    return _T_ATOM


def _format_const(q: Fraction) -> str:
    if q.denominator == 1 and q >= 0:
        return str(q.numerator)
    if q.denominator == 1:
        return f"({q.numerator})"
    return f"({q.numerator}/{q.denominator})"


def _wrap(t: Term, min_level: int) -> str:
    text = print_term(t)
    return f"({text})" if _term_level(t) < min_level else text


def print_term(t: Term) -> str:
    if isinstance(t, Const):
        return _format_const(t.value)
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Neg):
        return "-" + _wrap(t.arg, _T_UNARY)
    if isinstance(t, (Add, Sub)):
        op = "+" if isinstance(t, Add) else "-"
        return f"{_wrap(t.left, _T_SUM)} {op} {_wrap(t.right, _T_PRODUCT)}"
    if isinstance(t, (Mul, Div)):
        op = "*" if isinstance(t, Mul) else "/"
        return f"{_wrap(t.left, _T_PRODUCT)}{op}{_wrap(t.right, _T_UNARY)}"
    if isinstance(t, Pow):
        exp = str(t.exponent) if t.exponent >= 0 else f"(-{-t.exponent})"
        return f"{_wrap(t.base, _T_ATOM)}^{exp}"
    raise TypeError(f"not a term: {t!r}")


_F_IFF, _F_IMPLIES, _F_OR, _F_AND, _F_UNARY = 1, 2, 3, 4, 5


def _formula_level(f: Formula) -> int:
    if isinstance(f, Iff):
        return _F_IFF
    if isinstance(f, Implies):
        return _F_IMPLIES
    if isinstance(f, Or):
        return _F_OR if len(f.args) >= 2 else _F_UNARY
    if isinstance(f, And):
        return _F_AND if len(f.args) >= 2 else _F_UNARY
    return _F_UNARY


def _fwrap(f: Formula, above: int) -> str:
    text = print_formula(f)
    return f"({text})" if _formula_level(f) <= above else text


def print_formula(f: Formula) -> str:
    if isinstance(f, Compare):
        return f"{print_term(f.left)} {f.op} {print_term(f.right)}"
    if isinstance(f, Top):
        return "true"
    if isinstance(f, Bottom):
        return "false"
    if isinstance(f, Not):
        return "!" + _fwrap(f.arg, _F_AND)
    if isinstance(f, (And, Or)):
        if not f.args:
            return "true" if isinstance(f, And) else "false"
        if len(f.args) == 1:
            return print_formula(f.args[0])
        level = _F_AND if isinstance(f, And) else _F_OR
        sep = " & " if isinstance(f, And) else " | "
        return sep.join(_fwrap(a, level) for a in f.args)
    if isinstance(f, Implies):
        return f"{_fwrap(f.left, _F_IMPLIES)} -> {_fwrap(f.right, _F_IMPLIES)}"
    if isinstance(f, Iff):
        return f"{_fwrap(f.left, _F_IFF)} <-> {_fwrap(f.right, _F_IFF)}"
    if isinstance(f, (Forall, Exists)):
        q = "\\forall" if isinstance(f, Forall) else "\\exists"
        return f"{q} {f.var} {_fwrap(f.body, _F_AND)}"
    raise TypeError(f"not a formula: {f!r}")
