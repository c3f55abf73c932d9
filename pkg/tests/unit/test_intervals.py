from fractions import Fraction

import pytest

from envguard.errors import DivisionByZero
from envguard.kernel.syntax import parse_formula, parse_term
from envguard.services.intervals import (
    Interval,
    interval_term,
    kleene,
    refined_interval,
    split_box,
    widest,
)

F = Fraction


def test_arithmetic():
    a, b = Interval(-1, 2), Interval(3, 4)
    assert a + b == Interval(2, 6)
    assert a - b == Interval(-5, -1)
    assert a * b == Interval(-4, 8)
    assert b.reciprocal() == Interval(F(1, 4), F(1, 3))
    assert a ** 2 == Interval(0, 4)
    assert Interval(-3, -2) ** 2 == Interval(4, 9)


def test_empty_interval_is_rejected():
    with pytest.raises(ValueError):
        Interval(2, 1)


def test_reciprocal_through_zero_raises():
    with pytest.raises(DivisionByZero):
        Interval(-1, 1).reciprocal()
    with pytest.raises(DivisionByZero):
        interval_term(parse_term("1/p"), {"p": Interval(-1, 1)})


def test_monotone_pinning_removes_dependency():
    box = {"x": Interval(0, 1)}
    t = parse_term("x - x")
    assert interval_term(t, box) == Interval(-1, 1)
    assert refined_interval(t, box) == Interval(0, 0)


def test_kleene_three_values():
    f = parse_formula("x >= 0 & x <= 10")
    assert kleene(f, {"x": Interval(1, 2)}) is True
    assert kleene(f, {"x": Interval(11, 12)}) is False
    assert kleene(f, {"x": Interval(5, 15)}) is None
    assert kleene(parse_formula("x >= 0 -> y > 0"), {"x": Interval(-2, -1), "y": Interval(-1, 1)}) is True


def test_division_by_zero_leaves_atom_undecided():
    assert kleene(parse_formula("1/p >= 0"), {"p": Interval(-1, 1)}) is None


def test_split_widest():
    box = {"a": Interval(0, 1), "b": Interval(0, 4)}
    assert widest(box) == "b"
    left, right = split_box(box, "b")
    assert left["b"] == Interval(0, 2) and right["b"] == Interval(2, 4)
    assert left["a"] == box["a"]
