from fractions import Fraction

import pytest

from envguard.errors import NonlinearAtom, ResourceLimit
from envguard.kernel.formulas import evaluate_formula
from envguard.kernel.syntax import parse_formula
from envguard.services import fourier_motzkin as fm

F = Fraction


def test_make_atom_scales_to_coprime_integers():
    a = fm.make_atom({"y": F(1, 3), "x": F(1, 2)}, F(1), ">=")
    assert a.coeffs == (("x", F(3)), ("y", F(2)))
    assert a.const == 6


def test_equalities_have_a_positive_leading_coefficient():
    a = fm.make_atom({"x": F(-2)}, F(4), "=")
    assert a.coeffs == (("x", F(1)),)
    assert a.const == -2


def test_ground_atoms_collapse_to_bools():
    assert fm.make_atom({}, F(-1), ">=") is False
    assert fm.make_atom({"x": F(0)}, F(0), "=") is True
    with pytest.raises(ValueError):
        fm.make_atom({"x": F(1)}, F(0), "<")


def test_projection_combines_bounds():
    upper = fm.make_atom({"x": F(1), "y": F(-1)}, F(0), ">=")  # y <= x
    lower = fm.make_atom({"y": F(1)}, F(-1), ">")  # y > 1
    out = fm.fm_project([upper, lower], ["y"])
    assert out == [fm.make_atom({"x": F(1)}, F(-1), ">")]


def test_projection_detects_infeasibility():
    a = fm.make_atom({"x": F(1)}, F(-2), ">=")
    b = fm.make_atom({"x": F(-1)}, F(1), ">=")
    assert fm.fm_project([a, b], ["x"]) is None
    assert fm.find_model([a, b]) is None


def test_find_model_prefers_small_integers():
    atoms = [
        fm.make_atom({"x": F(1)}, F(-1, 2), ">"),  # x > 1/2
        fm.make_atom({"x": F(-1)}, F(3), ">="),  # x <= 3
    ]
    assert fm.find_model(atoms) == {"x": F(1)}


def test_find_model_handles_open_gaps_without_integers():
    atoms = [
        fm.make_atom({"x": F(1)}, F(-1, 3), ">"),
        fm.make_atom({"x": F(-1)}, F(2, 3), ">"),
    ]
    s = fm.find_model(atoms)
    assert all(a.holds(s) for a in atoms)


def _random_atoms(rng, n):
    atoms = []
    for _ in range(n):
        coeffs = {"x": F(int(rng.integers(-3, 4))), "y": F(int(rng.integers(-3, 4)))}
        a = fm.make_atom(coeffs, F(int(rng.integers(-6, 7)), 2), str(rng.choice([">=", ">", ">="])))
        if isinstance(a, bool):
            continue
        atoms.append(a)
    return atoms


def test_models_satisfy_their_atoms(rng):
    for _ in range(200):
        atoms = _random_atoms(rng, 4)
        s = fm.find_model(atoms)
        if s is not None:
            assert all(a.holds(s) for a in atoms)


def _check_projection_on_grid(rng, wanted: int, attempts: int) -> int:
    """Count instances whose projection both holds and fails somewhere on the grid."""
    grid = [F(k, 2) for k in range(-8, 9)]
    decisive = 0
    for _ in range(attempts):
        if decisive >= wanted:
            break
        atoms = _random_atoms(rng, 4)
        projected = fm.fm_project(atoms, ["y"])
        seen = set()
        for x0 in grid:
            pin = fm.make_atom({"x": F(1)}, -x0, "=")
            witness = fm.find_model(atoms + [pin])
            holds = projected is not None and all(a.holds({"x": x0}) for a in projected)
            assert holds == (witness is not None)
            if any(all(a.holds({"x": x0, "y": y}) for a in atoms) for y in grid):
                assert holds
            seen.add(holds)
        decisive += seen == {True, False}
    return decisive


def test_projection_is_exact_on_a_grid(rng):
    _check_projection_on_grid(rng, wanted=60, attempts=60)


@pytest.mark.slow
def test_projection_agrees_with_the_grid_on_many_instances(rng):
    assert _check_projection_on_grid(rng, wanted=500, attempts=20_000) >= 500


def test_decide_closed_sentences():
    assert fm.decide_closed(parse_formula("\\forall x \\exists y y > x"))
    assert not fm.decide_closed(parse_formula("\\exists x (x > 0 & x < 0)"))
    assert fm.decide_closed(parse_formula("\\forall x (x >= 0 | x < 0)"))
    assert not fm.decide_closed(parse_formula("\\forall x \\forall y (x != y)"))


def test_decide_closed_rejects_free_variables():
    with pytest.raises(ValueError):
        fm.decide_closed(parse_formula("\\exists x x > z"))


def test_eliminate_quantifiers_keeps_free_variables(rng):
    f = parse_formula("\\exists y (0 <= y & y <= V & x <= y)")
    g = fm.eliminate_quantifiers(f)
    for _ in range(100):
        s = {"x": F(int(rng.integers(-10, 10)), 3), "V": F(int(rng.integers(-10, 10)), 3)}
        expected = s["V"] >= 0 and s["x"] <= s["V"]
        assert evaluate_formula(g, s) == expected


def test_nonlinear_atoms_are_refused():
    with pytest.raises(NonlinearAtom):
        fm.linearize(parse_formula("T*v <= p"))


def test_atom_cap_raises_resource_limit():
    tree = fm.linearize(parse_formula("(a > 0 | b > 0) & (c > 0 | d > 0) & (u > 0 | w > 0)"))
    with pytest.raises(ResourceLimit):
        fm.dnf(tree, fm.EliminationContext(atoms_cap=3))
