from fractions import Fraction

import pytest

from envguard.errors import HiddenStateVariable, MissingParameter, TemplateMismatch
from envguard.hybrid.perturbations import saved_name
from envguard.kernel.formulas import formula_variables
from envguard.kernel.syntax import parse_formula
from envguard.services.obligations import (
    Obligation,
    ObligationKind,
    QuantifierBlock,
    build_liveness,
    build_robustness,
    build_safety_under_perturbation,
    build_simplified_bounded,
    concrete_violation,
    match_bounded_template,
    project_auxiliaries,
    versaille_form,
)
from envguard.services.solver import Status, qe_decide

F = Fraction


def _robustness(robot, ctl, angel, **params):
    model = robot.model(ctl, {k: F(v) for k, v in params.items()})
    ap = robot.perturbation(angel)
    hidden = [saved_name(x) for x in model.state_vars if saved_name(x) in ap.bound_variables()]
    return model, project_auxiliaries(build_robustness(model, ap), hidden)


def test_robustness_prefix_alternates(robot):
    _, ob = _robustness(robot, "C11", "angel1")
    assert [b.kind for b in ob.blocks] == ["forall", "exists", "forall"]
    assert not ob.is_universal()
    # every quantified name occurs in the matrix
    assert set(ob.variables()) <= formula_variables(ob.matrix)


def test_unidirectional_envelope_is_fragile(robot):
    _, ob = _robustness(robot, "C11", "angel1")
    verdict = qe_decide(ob)
    assert verdict.status is Status.COUNTEREXAMPLE
    p = ob.rename_back(verdict.counterexample)["p"]
    assert 0 <= p <= F(1, 2)


@pytest.mark.parametrize("delta_v, expected", [(5, Status.PROVEN), (6, Status.COUNTEREXAMPLE)])
def test_bidirectional_envelope_tolerates_half_the_speed_range(robot, delta_v, expected):
    _, ob = _robustness(robot, "C12", "angel1", delta_v=delta_v)
    assert qe_decide(ob).status is expected


def test_robustness_is_monotone_in_the_noise_bound(robot):
    grid = [F(0), F(1), F(5, 2), F(5), F(6)]
    proven = [qe_decide(_robustness(robot, "C12", "angel1", delta_v=d)[1]).status is Status.PROVEN for d in grid]
    # once robustness fails, every larger bound fails too
    assert proven == sorted(proven, reverse=True)
    assert proven == [True, True, True, True, False]


def test_liveness_of_robot_envelopes(robot):
    for ctl in ("C11", "C12"):
        ob = build_liveness(robot.model(ctl))
        assert ob.kind is ObligationKind.LIVENESS
        assert qe_decide(ob).status is Status.PROVEN


def test_saved_sensor_value_is_projected_away(robot):
    model = robot.model("C12")
    full = build_robustness(model, robot.perturbation("angel2"))
    assert any(full.base_of(x) == "p_pre" for x in full.variables())
    ob = project_auxiliaries(full, ["p_pre"])
    assert all(ob.base_of(x) != "p_pre" for x in ob.variables())
    assert qe_decide(ob).status is Status.PROVEN


def test_state_variables_cannot_be_hidden(robot):
    ob = build_robustness(robot.model("C12"), robot.perturbation("angel2"))
    with pytest.raises(HiddenStateVariable):
        project_auxiliaries(ob, ["p"])


@pytest.mark.parametrize("ctl, angel", [("C11", "angel1"), ("C12", "angel1"), ("C12", "angel2")])
def test_simplified_form_agrees_with_full_form(robot, ctl, angel):
    model, full = _robustness(robot, ctl, angel)
    d_in, d_out = match_bounded_template(model, robot.perturbation(angel))
    simple = build_simplified_bounded(model, d_in, d_out)
    assert qe_decide(simple).status is qe_decide(full).status


def test_bounded_template_deltas(robot):
    d_in, d_out = match_bounded_template(robot.model("C12"), robot.perturbation("angel2"))
    assert d_in == {"p": F(1, 4)}
    assert d_out == {"v": F(1, 4)}


def test_symbolic_delta_is_a_missing_parameter(robot):
    model = robot.model("C12", {"delta_v": None})
    with pytest.raises(MissingParameter):
        match_bounded_template(model, robot.perturbation("angel1"))


def test_simplified_template_errors(robot):
    model = robot.model("C12")
    with pytest.raises(TemplateMismatch):
        build_simplified_bounded(model, {"q": F(1)}, {})
    with pytest.raises(TemplateMismatch):
        build_simplified_bounded(model, {}, {"p": F(1)})
    with pytest.raises(TemplateMismatch):
        build_simplified_bounded(model, {"p": F(-1)}, {})


def test_safety_and_real_valued_forms_are_universal(robot):
    model = robot.model("C12")
    impl = robot.implementation("impl_R")
    safety = build_safety_under_perturbation(model, robot.perturbation("angel2"), impl)
    assert safety.is_universal() and safety.kind is ObligationKind.SAFETY
    real = versaille_form(model, impl)
    assert real.is_universal() and real.kind is ObligationKind.REAL_VALUED
    assert real.provenance["implementation"] == "impl_R"


def test_concrete_violation_checks_the_initial_state(robot):
    model = robot.model("C11")
    ob = build_robustness(model, robot.perturbation("angel1"))
    assert concrete_violation(ob, model, {"p_0": F(1, 4)})
    assert not concrete_violation(ob, model, {"p_0": F(-1)})


def test_rename_back_and_instantiate():
    ob = Obligation(
        kind=ObligationKind.SAFETY,
        blocks=(QuantifierBlock("forall", ("p_0", "v_3")),),
        matrix=parse_formula("p_0 <= v_3"),
        generations={"p_0": ("p", 0), "v_3": ("v", 3)},
    )
    named = ob.rename_back({"p_0": F(1), "v_3": F(2), "T": F(1)})
    assert named == {"p": F(1), "v@3": F(2), "T": F(1)}
    fixed = ob.instantiate({"p_0": F(1)})
    assert fixed.variables() == ("v_3",)
    assert "p_0" not in formula_variables(fixed.matrix)
