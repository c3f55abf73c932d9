# envguard/hybrid/syntax.py
"""
Program syntax:

    program  := sequence ("++" sequence)*
    sequence := atomic (";" atomic)* [";"]
    atomic   := IDENT ":=" "*" | IDENT ":=" term | "?" unary_formula
              | "skip" | "{" program "}"
"""

from __future__ import annotations

from envguard.hybrid.programs import Assign, AssignAny, Choice, HybridProgram, Seq, Test, skip
from envguard.kernel.syntax import TokenStream, parse_unary_formula_tokens, parse_term_tokens

_STOP = ("}", "++", ")")


def parse_program_tokens(ts: TokenStream) -> HybridProgram:
    left = _sequence(ts)
    while ts.accept("++"):
        left = Choice(left, _sequence(ts))
    return left


def _sequence(ts: TokenStream) -> HybridProgram:
    parts = [_atomic(ts)]
    while ts.accept(";"):
        if ts.at(*_STOP) or ts.peek().kind == "eof":
            break
        parts.append(_atomic(ts))
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = Seq(p, out)
    return out


def _atomic(ts: TokenStream) -> HybridProgram:
    tok = ts.peek()
    if ts.accept("{"):
        inner = parse_program_tokens(ts)
        ts.expect("}")
        return inner
    if ts.accept("?"):
        return Test(parse_unary_formula_tokens(ts))
    if tok.kind == "ident" and tok.text == "skip":
        ts.next()
        return skip()
    if tok.kind == "ident":
        ts.next()
        ts.expect(":=")
        if ts.accept("*"):
            return AssignAny(tok.text)
        return Assign(tok.text, parse_term_tokens(ts))
    raise ts.error("a program statement")


def parse_program(text: str) -> HybridProgram:
    ts = TokenStream.from_text(text)
    hp = parse_program_tokens(ts)
    if ts.peek().kind != "eof":
        raise ts.error("end of program")
    return hp
