# envguard/connectors/model_dsl.py
"""
Reader for model files (.gdm).

    param T = 1;                 param K;          (symbolic)
    state p, v;
    pre  0 <= p;
    post 0 <= p;
    invariant 0 <= p & T > 0;
    ctl C1 { v := *; ?(0 <= v & T*v <= p); }
    ctl C2 assuming { post 0 <= p & p <= W; invariant ...; } { ... }
    angel noisy { pre { skip } post { eps_v := *; ?(-d <= eps_v & eps_v <= d); v := v + eps_v; } }
    impl exact closed { v+ := -1/(p+10) + M; }
    impl net network "nets/f.nnet" inputs (p, v) regression v;
    impl cls network "nets/c.nnet" inputs (p, v) argmax v [-2, 0, 2];
    domain wall { p in [0, 100]; }
    pipeline full { ctl C1; angel noisy; impl exact; domain wall; target 1/4; }

Errors carry line and column of the offending token. Network files are
resolved relative to the model file and loaded on first use.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from envguard.connectors.nnet_format import load_network
from envguard.errors import ParseError, UnboundVariable, UnresolvedName
from envguard.hybrid.implementations import (
    ArgmaxCases,
    ClosedForm,
    Implementation,
    NetworkImpl,
    OutputBinding,
    Regression,
)
from envguard.hybrid.model import EnvelopeModel
from envguard.hybrid.perturbations import AngelicPerturbation
from envguard.hybrid.programs import HybridProgram, skip
from envguard.hybrid.syntax import parse_program_tokens
from envguard.kernel.formulas import Formula
from envguard.kernel.syntax import Token, TokenStream, parse_formula_tokens, parse_term_tokens
from envguard.kernel.terms import Term, evaluate_term
from envguard.services.intervals import Interval
from envguard.utils.logging import get_logger


@dataclass(frozen=True)
class Envelope:
    name: str
    ctl: HybridProgram
    pre: Optional[Formula] = None
    post: Optional[Formula] = None
    inv: Optional[Formula] = None


@dataclass(frozen=True)
class NetworkDecl:
    name: str
    path: Path
    input_vars: Tuple[str, ...]
    binding: OutputBinding


@dataclass(frozen=True)
class PipelineDecl:
    name: str
    ctl: str
    angel: str
    impl: str
    domain: str
    target: Optional[Fraction] = None


@dataclass
class ModelFile:
    source: str = "<text>"
    params: Dict[str, Optional[Fraction]] = field(default_factory=dict)
    state: List[str] = field(default_factory=list)
    pre: Optional[Formula] = None
    post: Optional[Formula] = None
    inv: Optional[Formula] = None
    envelopes: Dict[str, Envelope] = field(default_factory=dict)
    perturbations: Dict[str, AngelicPerturbation] = field(default_factory=dict)
    implementations: Dict[str, Union[ClosedForm, NetworkDecl]] = field(default_factory=dict)
    domains: Dict[str, Dict[str, Interval]] = field(default_factory=dict)
    pipelines: Dict[str, PipelineDecl] = field(default_factory=dict)
    _networks: Dict[str, NetworkImpl] = field(default_factory=dict, repr=False)

    def fixed_params(self) -> Dict[str, Fraction]:
        return {k: v for k, v in self.params.items() if v is not None}

    # -----------------------------
    # Lookups
    # -----------------------------
    def _get(self, table: dict, name: str, kind: str):
        try:
            return table[name]
        except KeyError:
            raise UnresolvedName(name, kind) from None

    def model(self, ctl: str, overrides: Optional[Dict[str, Optional[Fraction]]] = None) -> EnvelopeModel:
        env = self._get(self.envelopes, ctl, "control envelope")
        unknown = sorted(set(overrides or {}) - set(self.params))
        if unknown:
            raise UnresolvedName(", ".join(unknown), "parameter")
        model = EnvelopeModel(
            name=env.name,
            pre=env.pre or self.pre,
            post=env.post or self.post,
            inv=env.inv or self.inv,
            ctl=env.ctl,
            parameters=dict(self.params),
            state_vars=list(self.state),
        )
        return model.with_parameters(dict(overrides or {}))

    def perturbation(self, name: str) -> AngelicPerturbation:
        return self._get(self.perturbations, name, "perturbation")

    def implementation(self, name: str, logger: Optional[logging.Logger] = None) -> Implementation:
        decl = self._get(self.implementations, name, "implementation")
        if isinstance(decl, ClosedForm):
            return decl
        if name not in self._networks:
            net = load_network(decl.path, logger)
            self._networks[name] = NetworkImpl(decl.name, net, decl.input_vars, decl.binding)
        return self._networks[name]

    def domain(self, name: str) -> Dict[str, Interval]:
        return dict(self._get(self.domains, name, "domain"))

    def pipeline(self, name: str) -> PipelineDecl:
        return self._get(self.pipelines, name, "pipeline")


# -----------------------------
# Parser
# -----------------------------
class _Parser:
    def __init__(self, text: str, base_dir: Path, source: str):
        self.ts = TokenStream.from_text(text)
        self.base_dir = base_dir
        self.out = ModelFile(source=source)
        self.references: List[Tuple[str, dict, str]] = []

    def ident(self, what: str = "a name") -> Token:
        tok = self.ts.peek()
        if tok.kind != "ident":
            raise self.ts.error(what)
        return self.ts.next()

    def keyword(self, word: str) -> Token:
        tok = self.ts.peek()
        if tok.kind != "ident" or tok.text != word:
            raise self.ts.error(repr(word))
        return self.ts.next()

    def fresh(self, table: dict, tok: Token, kind: str) -> str:
        if tok.text in table:
            raise ParseError(tok.line, tok.col, f"a new {kind} name", tok.text)
        return tok.text

    def constant(self, t: Term, tok: Token) -> Fraction:
        try:
            return evaluate_term(t, self.out.fixed_params())
        except UnboundVariable as e:
            raise ParseError(tok.line, tok.col, f"a constant (unbound {e.name})", tok.text) from None

    def formula(self) -> Formula:
        f = parse_formula_tokens(self.ts)
        self.ts.expect(";")
        return f

    def program_block(self) -> HybridProgram:
        self.ts.expect("{")
        if self.ts.accept("}"):
            return skip()
        hp = parse_program_tokens(self.ts)
        self.ts.expect("}")
        return hp

    def parse(self) -> ModelFile:
        if self.ts.peek().kind == "eof":
            raise self.ts.error("a declaration")
        while self.ts.peek().kind != "eof":
            tok = self.ident("a declaration")
            handler = getattr(self, f"_decl_{tok.text}", None)
            if handler is None:
                raise ParseError(tok.line, tok.col, "a declaration keyword", tok.text)
            handler(tok)
        self._resolve()
        return self.out

    # -----------------------------
    # Declarations
    # -----------------------------
    def _decl_param(self, tok: Token) -> None:
        name_tok = self.ident("a parameter name")
        name = self.fresh(self.out.params, name_tok, "parameter")
        value = None
        if self.ts.accept("="):
            at = self.ts.peek()
            value = self.constant(parse_term_tokens(self.ts), at)
        self.ts.expect(";")
        self.out.params[name] = value

    def _decl_state(self, tok: Token) -> None:
        while True:
            name_tok = self.ident("a state variable")
            if name_tok.text in self.out.state:
                raise ParseError(name_tok.line, name_tok.col, "a new state variable", name_tok.text)
            self.out.state.append(name_tok.text)
            if not self.ts.accept(","):
                break
        self.ts.expect(";")

    def _single(self, tok: Token, attr: str) -> None:
        if getattr(self.out, attr) is not None:
            raise ParseError(tok.line, tok.col, f"a single {tok.text} declaration", tok.text)
        setattr(self.out, attr, self.formula())

    def _decl_pre(self, tok: Token) -> None:
        self._single(tok, "pre")

    def _decl_post(self, tok: Token) -> None:
        self._single(tok, "post")

    def _decl_invariant(self, tok: Token) -> None:
        self._single(tok, "inv")

    def _decl_ctl(self, tok: Token) -> None:
        name = self.fresh(self.out.envelopes, self.ident("an envelope name"), "envelope")
        local: Dict[str, Formula] = {}
        if self.ts.peek().kind == "ident" and self.ts.peek().text == "assuming":
            self.ts.next()
            self.ts.expect("{")
            while not self.ts.accept("}"):
                kw = self.ident("pre, post or invariant")
                key = {"pre": "pre", "post": "post", "invariant": "inv"}.get(kw.text)
                if key is None or key in local:
                    raise ParseError(kw.line, kw.col, "pre, post or invariant (once each)", kw.text)
                local[key] = self.formula()
        self.out.envelopes[name] = Envelope(name, self.program_block(), **local)

    def _decl_angel(self, tok: Token) -> None:
        name = self.fresh(self.out.perturbations, self.ident("a perturbation name"), "perturbation")
        self.ts.expect("{")
        self.keyword("pre")
        pre = self.program_block()
        self.keyword("post")
        post = self.program_block()
        self.ts.expect("}")
        self.out.perturbations[name] = AngelicPerturbation(name, pre, post)

    def _decl_impl(self, tok: Token) -> None:
        name = self.fresh(self.out.implementations, self.ident("an implementation name"), "implementation")
        kind = self.ident("closed or network")
        if kind.text == "closed":
            self.ts.expect("{")
            outputs: Dict[str, Term] = {}
            while not self.ts.accept("}"):
                var = self.ident("an output variable")
                self.ts.expect("+")
                self.ts.expect(":=")
                outputs[var.text] = parse_term_tokens(self.ts)
                self.ts.expect(";")
            self.out.implementations[name] = ClosedForm(name, outputs)
            return
        if kind.text != "network":
            raise ParseError(kind.line, kind.col, "closed or network", kind.text)
        path_tok = self.ts.expect_kind("string", "a quoted network file")
        path = self.base_dir / path_tok.text.strip('"')
        if not path.is_file():
            raise UnresolvedName(str(path), "network file")
        self.keyword("inputs")
        self.ts.expect("(")
        inputs = [self.ident("an input variable").text]
        while self.ts.accept(","):
            inputs.append(self.ident("an input variable").text)
        self.ts.expect(")")
        mode = self.ident("regression or argmax")
        var = self.ident("an output variable").text
        if mode.text == "regression":
            binding: OutputBinding = Regression(var)
        elif mode.text == "argmax":
            self.ts.expect("[")
            actions = [parse_term_tokens(self.ts)]
            while self.ts.accept(","):
                actions.append(parse_term_tokens(self.ts))
            self.ts.expect("]")
            binding = ArgmaxCases(var, tuple(actions))
        else:
            raise ParseError(mode.line, mode.col, "regression or argmax", mode.text)
        self.ts.expect(";")
        self.out.implementations[name] = NetworkDecl(name, path, tuple(inputs), binding)

    def _decl_domain(self, tok: Token) -> None:
        name = self.fresh(self.out.domains, self.ident("a domain name"), "domain")
        box: Dict[str, Interval] = {}
        self.ts.expect("{")
        while not self.ts.accept("}"):
            var = self.ident("a variable")
            self.keyword("in")
            self.ts.expect("[")
            lo_tok = self.ts.peek()
            lo = self.constant(parse_term_tokens(self.ts), lo_tok)
            self.ts.expect(",")
            hi_tok = self.ts.peek()
            hi = self.constant(parse_term_tokens(self.ts), hi_tok)
            self.ts.expect("]")
            self.ts.expect(";")
            if lo > hi:
                raise ParseError(lo_tok.line, lo_tok.col, "a lower bound not above the upper bound", lo_tok.text)
            box[var.text] = Interval(lo, hi)
        self.out.domains[name] = box

    def _decl_pipeline(self, tok: Token) -> None:
        name = self.fresh(self.out.pipelines, self.ident("a pipeline name"), "pipeline")
        fields: Dict[str, object] = {}
        tables = {
            "ctl": (self.out.envelopes, "control envelope"),
            "angel": (self.out.perturbations, "perturbation"),
            "impl": (self.out.implementations, "implementation"),
            "domain": (self.out.domains, "domain"),
        }
        self.ts.expect("{")
        while not self.ts.accept("}"):
            kw = self.ident("ctl, angel, impl, domain or target")
            if kw.text in fields or kw.text not in (*tables, "target"):
                raise ParseError(kw.line, kw.col, "ctl, angel, impl, domain or target (once each)", kw.text)
            if kw.text == "target":
                at = self.ts.peek()
                fields["target"] = self.constant(parse_term_tokens(self.ts), at)
            else:
                ref = self.ident("a name")
                table, kind = tables[kw.text]
                self.references.append((ref.text, table, kind))
                fields[kw.text] = ref.text
            self.ts.expect(";")
        missing = [k for k in tables if k not in fields]
        if missing:
            raise ParseError(tok.line, tok.col, f"pipeline entries {', '.join(missing)}", name)
        self.out.pipelines[name] = PipelineDecl(name, **fields)

    # -----------------------------
    # Resolution
    # -----------------------------
    def _resolve(self) -> None:
        for name, table, kind in self.references:
            if name not in table:
                raise UnresolvedName(name, kind)
        for env in self.out.envelopes.values():
            for attr, word in (("pre", "pre"), ("post", "post"), ("inv", "invariant")):
                if getattr(env, attr) is None and getattr(self.out, attr) is None:
                    raise UnresolvedName(f"{word} of {env.name}", "declaration")


def parse_model_text(text: str, base_dir: Union[str, Path] = ".", source: str = "<text>") -> ModelFile:
    return _Parser(text, Path(base_dir), source).parse()


def parse_model(path: Union[str, Path], logger: Optional[logging.Logger] = None) -> ModelFile:
    logger = logger or get_logger(__name__)
    path = Path(path)
    model = parse_model_text(path.read_text(encoding="utf-8"), path.parent, str(path))
    logger.debug(
        "parsed %s: %d envelope(s), %d perturbation(s), %d implementation(s)",
        path.name, len(model.envelopes), len(model.perturbations), len(model.implementations),
    )
    return model
