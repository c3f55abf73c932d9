from fractions import Fraction

import pytest

from envguard.errors import DivisionByZero, NonlinearAtom, ParseError, QuantifierPresent, UnboundVariable
from envguard.kernel.formulas import (
    FALSE,
    TRUE,
    And,
    Compare,
    Exists,
    Forall,
    evaluate_formula,
    formula_variables,
    normalize,
    substitute,
)
from envguard.kernel.syntax import parse_formula, parse_term, print_formula, print_term
from envguard.kernel.terms import (
    Const,
    Var,
    as_linear,
    differentiate,
    evaluate_term,
    fold_constants,
    linear_term,
)

F = Fraction


def test_decimal_literals_are_exact():
    t = parse_term("0.01*(p+10)")
    assert evaluate_term(t, {"p": F(0)}) == F(1, 10)


def test_evaluate_raises_on_unbound_and_zero_division():
    with pytest.raises(UnboundVariable):
        evaluate_term(parse_term("x + 1"), {})
    with pytest.raises(DivisionByZero):
        evaluate_term(parse_term("1/(x - 2)"), {"x": F(2)})


def test_as_linear_collects_coefficients():
    coeffs, k = as_linear(parse_term("2*(p - 3) - v/4 + 1"))
    assert coeffs == {"p": F(2), "v": F(-1, 4)}
    assert k == F(-5)


def test_as_linear_rejects_products_of_variables():
    with pytest.raises(NonlinearAtom):
        as_linear(parse_term("T*v"))
    with pytest.raises(NonlinearAtom):
        as_linear(parse_term("1/(p+10)"))


def test_linear_term_is_canonical():
    t = linear_term({"v": F(-1), "p": F(3, 2)}, F(-2))
    assert print_term(t) == "(3/2)*p - v - 2"


def test_fold_constants_keeps_variables():
    t = fold_constants(parse_term("-1/(0.01*(p+10)) + (3 - 1)"))
    assert print_term(t) == "(-1)/((1/100)*(p + 10)) + 2"


def test_differentiate_quotient():
    d = differentiate(parse_term("-1/(p+10)"), "p")
    # d/dp -(p+10)^-1 = (p+10)^-2
    assert evaluate_term(d, {"p": F(0)}) == F(1, 100)
    assert evaluate_term(differentiate(parse_term("3*v"), "p"), {}) == 0


def test_chained_comparison_becomes_conjunction():
    f = parse_formula("0 <= v <= V_max")
    assert isinstance(f, And)
    assert [a.op for a in f.args] == ["<=", "<="]
    assert evaluate_formula(f, {"v": F(3), "V_max": F(10)})
    assert not evaluate_formula(f, {"v": F(11), "V_max": F(10)})


def test_precedence_and_printer_agree():
    text = "a = 1 | b = 2 & c = 3 -> d < 0"
    f = parse_formula(text)
    assert print_formula(f) == "a = 1 | b = 2 & c = 3 -> d < 0"
    assert parse_formula(print_formula(f)) == f


def test_parenthesized_formula_and_term():
    f = parse_formula("(p - T*v) >= 0 & (x > 0 | x < -1)")
    assert evaluate_formula(f, {"p": F(1), "T": F(1), "v": F(1), "x": F(-2)})


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_formula("x <= \n  & y")
    assert err.value.line == 2
    assert err.value.col == 3


def test_quantified_formula_cannot_be_evaluated():
    f = parse_formula("\\forall x x >= 0")
    assert isinstance(f, Forall)
    with pytest.raises(QuantifierPresent):
        evaluate_formula(f, {})


def test_substitution_avoids_capture():
    f = parse_formula("\\exists y y > x")
    g = substitute(f, {"x": Var("y") + Const(1)})
    assert isinstance(g, Exists)
    assert g.var != "y"
    assert formula_variables(g) == {"y"}


@pytest.mark.parametrize("samples", [200, pytest.param(1000, marks=pytest.mark.slow)])
def test_substitution_lemma_on_samples(rng, samples):
    f = parse_formula("2*p - v <= 3 & (v > 0 | p != 1)")
    t = parse_term("v + 1/2")
    g = substitute(f, {"p": t})
    for _ in range(samples):
        s = {"p": F(int(rng.integers(-20, 20)), 4), "v": F(int(rng.integers(-20, 20)), 3)}
        shifted = dict(s, p=evaluate_term(t, s))
        assert evaluate_formula(g, s) == evaluate_formula(f, shifted)


def test_normalize_sorts_and_folds():
    a = normalize(parse_formula("y <= 1 & x >= 2 & 1 < 2"))
    b = normalize(parse_formula("2 <= x & y <= 1"))
    assert a == b
    assert normalize(parse_formula("1 + 1 = 2")) == TRUE
    assert normalize(parse_formula("3 < 2")) == FALSE


def test_normalize_atoms_compare_against_zero():
    f = normalize(parse_formula("p <= T*v"))
    assert isinstance(f, Compare)
    assert f.op == ">="
    assert f.right == Const(0)


def test_normalize_renames_shadowing_binders():
    f = normalize(parse_formula("\\exists x (x > 0 & \\exists x x < 0)"))
    assert isinstance(f, Exists)
    inner = [a for a in f.body.args if isinstance(a, Exists)][0]
    assert inner.var != f.var
