from fractions import Fraction

import pytest

from envguard.errors import SignatureMismatch
from envguard.hybrid.implementations import check_signature
from envguard.hybrid.model import EnvelopeModel
from envguard.hybrid.monitor import check_monitor_soundness, reachability_formula, synthesize_monitor
from envguard.hybrid.perturbations import (
    identity_perturbation,
    match_noise_template,
    output_noise,
    sensor_and_output_noise,
)
from envguard.hybrid.programs import (
    BLOCKED,
    Choice,
    ScriptedChooser,
    bound_variables,
    must_bound_variables,
    print_program,
    program_free_variables,
    run,
)
from envguard.hybrid.syntax import parse_program
from envguard.kernel.formulas import Iff, evaluate_formula, forall, formula_variables, substitute
from envguard.kernel.syntax import parse_formula
from envguard.kernel.terms import Const
from envguard.services import fourier_motzkin as fm
from envguard.services.obligations import Obligation, ObligationKind, QuantifierBlock
from envguard.services.solver import Status, qe_decide

F = Fraction
ROBOT_PARAMS = {"T": Const(1), "V_max": Const(10)}


def test_choice_and_sequence_parse():
    hp = parse_program("{a := 1; b := a + 1} ++ ?(x > 0); c := *;")
    assert isinstance(hp, Choice)
    assert bound_variables(hp) == ("a", "b", "c")
    assert must_bound_variables(hp) == frozenset()
    assert program_free_variables(hp) == {"x"}


def test_free_variables_skip_values_written_first():
    hp = parse_program("v := p; ?(v >= 0); w := v + q")
    assert program_free_variables(hp) == {"p", "q"}
    assert must_bound_variables(hp) == {"v", "w"}


def test_run_with_scripted_choices():
    hp = parse_program("v := *; ?(0 <= v & v <= p) ++ v := -1")
    out = run(hp, {"p": F(5)}, ScriptedChooser(values=[F(3)], branches=[0]))
    assert out["v"] == 3
    assert run(hp, {"p": F(5)}, ScriptedChooser(values=[F(7)], branches=[0])) is BLOCKED
    assert run(hp, {"p": F(5)}, ScriptedChooser(branches=[1]))["v"] == -1


def test_printed_program_parses_back():
    hp = parse_program("{x := 1 ++ x := 2}; ?(x > 0)")
    assert parse_program(print_program(hp)) == hp


def test_model_rejects_controller_writing_a_parameter():
    with pytest.raises(ValueError):
        EnvelopeModel(
            pre=parse_formula("p >= 0"),
            post=parse_formula("p >= 0"),
            inv=parse_formula("p >= 0"),
            ctl=parse_program("T := 2"),
            parameters={"T": F(1)},
            state_vars=["p", "v"],
        )


def test_with_parameters_keeps_symbolic_markers(robot):
    model = robot.model("C11", {"T": None, "delta_v": F(1, 2)})
    assert "T" in model.symbolic_parameters()
    assert model.fixed_parameters()["delta_v"] == F(1, 2)
    # the parsed file itself is unchanged
    assert robot.params["T"] == 1


def test_templates_round_trip_through_the_matcher():
    ap = sensor_and_output_noise({"p": F(1, 4)}, {"v": F(1, 8)})
    tpl = match_noise_template(ap)
    assert tpl.inputs == {"p": Const(F(1, 4))}
    assert tpl.outputs == {"v": Const(F(1, 8))}
    assert tpl.saved == {"p": "p_pre"}

    only_out = match_noise_template(output_noise({"v": F(1)}))
    assert only_out.inputs == {} and only_out.outputs == {"v": Const(1)}

    ident = match_noise_template(identity_perturbation())
    assert ident.inputs == {} and ident.outputs == {}


def test_robot_perturbations_are_templates(robot):
    tpl = match_noise_template(robot.perturbation("angel2"))
    assert set(tpl.inputs) == {"p"}
    assert set(tpl.outputs) == {"v"}


def test_monitor_of_unidirectional_envelope(robot):
    m = synthesize_monitor(robot.model("C11").ctl)
    assert m.post_vars == ("v_post",)
    s = {"p": F(5), "v": F(0), "T": F(1), "V_max": F(10)}
    assert evaluate_formula(m.formula, dict(s, v_post=F(3)))
    assert not evaluate_formula(m.formula, dict(s, v_post=F(6)))
    assert not evaluate_formula(m.formula, dict(s, v_post=F(-1)))


def _equivalent(a, b) -> bool:
    matrix = substitute(Iff(a, b), ROBOT_PARAMS)
    names = tuple(sorted(formula_variables(matrix)))
    ob = Obligation(ObligationKind.REAL_VALUED, (QuantifierBlock("forall", names),), matrix)
    return qe_decide(ob).status is Status.PROVEN


def test_monitor_is_exactly_the_expected_relation(robot):
    m = synthesize_monitor(robot.model("C11").ctl)
    assert _equivalent(m.formula, parse_formula("0 <= v_post & v_post <= V_max & 0 <= p - T*v_post"))


@pytest.mark.parametrize("ctl", ["C11", "C12", "C22"])
def test_monitor_agrees_with_reachability(robot, ctl):
    hp = robot.model(ctl).ctl
    m = synthesize_monitor(hp)
    # reachability carries existentials, so decide the closed biconditional directly
    matrix = substitute(Iff(m.formula, reachability_formula(hp)), dict(ROBOT_PARAMS, W=Const(100)))
    assert fm.decide_closed(forall(sorted(formula_variables(matrix)), matrix))


def test_monitor_solves_symbol_from_its_equation():
    hp = parse_program("{v := *; v := v + 1 ++ v := 0}; ?(v >= 0)")
    m = synthesize_monitor(hp)
    assert evaluate_formula(m.formula, {"v_post": F(0)})
    assert evaluate_formula(m.formula, {"v_post": F(7)})
    assert not evaluate_formula(m.formula, {"v_post": F(-1)})


@pytest.mark.parametrize("samples", [300, pytest.param(1000, marks=pytest.mark.slow)])
def test_monitor_soundness_sampling(robot, rng, samples):
    model = robot.model("C12")
    m = synthesize_monitor(model.ctl)
    report = check_monitor_soundness(m, samples, rng, model.fixed_parameters())
    assert report.ok
    assert report.executions + report.replays > 0


def test_forall_builder_nests_in_order():
    f = forall(["a", "b"], parse_formula("a <= b"))
    assert f.var == "a" and f.body.var == "b"


def test_implementation_signature_must_match_controller(robot):
    impl = robot.implementation("impl_R")
    check_signature(impl, robot.model("C11").ctl)
    with pytest.raises(SignatureMismatch):
        check_signature(impl, parse_program("v := 1; w := 2"))
