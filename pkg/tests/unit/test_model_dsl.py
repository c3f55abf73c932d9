from fractions import Fraction

import pytest

from envguard.connectors.model_dsl import ClosedForm, NetworkDecl, parse_model_text
from envguard.deps import DATA_DIR
from envguard.errors import ParseError, UnresolvedName
from envguard.hybrid.implementations import ArgmaxCases, NetworkImpl, Regression
from envguard.kernel.formulas import evaluate_formula
from envguard.services.intervals import Interval

F = Fraction

HEADER = """
param T = 1;
param V_max;
state p, v;
pre 0 <= p;
post 0 <= p;
invariant 0 <= p;
"""


def test_robot_file_declarations(robot):
    assert sorted(robot.envelopes) == ["C11", "C12", "C22"]
    assert sorted(robot.perturbations) == ["angel1", "angel2"]
    assert sorted(robot.implementations) == ["impl_R", "nn_classifier", "nn_regression"]
    assert robot.state == ["p", "v"]
    assert robot.params["M"] == F(19, 2)
    assert robot.domain("desk") == {"p": Interval(0, 10), "v": Interval(-10, 10)}
    full = robot.pipeline("robot_full")
    assert (full.ctl, full.angel, full.impl, full.domain) == ("C12", "angel2", "impl_R", "wall")


def test_envelope_assumptions_override_the_file(robot):
    c22 = robot.model("C22")
    s = {"p": F(150), "W": F(100), "V_max": F(10), "T": F(1)}
    assert evaluate_formula(robot.model("C12").pre, s)
    assert not evaluate_formula(c22.pre, s)


def test_network_implementations_load_lazily(robot):
    assert isinstance(robot.implementations["nn_regression"], NetworkDecl)
    impl = robot.implementation("nn_classifier")
    assert isinstance(impl, NetworkImpl)
    assert isinstance(impl.binding, ArgmaxCases)
    assert len(impl.binding.actions) == 3
    assert isinstance(robot.implementation("nn_regression").binding, Regression)
    assert robot.implementation("nn_classifier") is impl


def test_unbound_parameter_stays_symbolic():
    mf = parse_model_text(HEADER + "ctl A { v := *; ?(v <= V_max); }")
    assert mf.params["V_max"] is None
    assert mf.model("A").symbolic_parameters() == ["V_max"]
    assert mf.model("A", {"V_max": F(3)}).symbolic_parameters() == []


def test_closed_form_outputs():
    mf = parse_model_text(HEADER + "ctl A { v := 0; }\nimpl k closed { v+ := p/2 - T; }")
    impl = mf.implementation("k")
    assert isinstance(impl, ClosedForm)
    assert impl.input_variables() == ("T", "p")


def test_empty_file_is_a_parse_error():
    with pytest.raises(ParseError):
        parse_model_text("")
    with pytest.raises(ParseError):
        parse_model_text("# only a comment\n")


def test_unknown_declaration_keyword():
    with pytest.raises(ParseError) as err:
        parse_model_text("parameter T = 1;")
    assert err.value.line == 1


def test_duplicate_names_are_rejected():
    with pytest.raises(ParseError):
        parse_model_text(HEADER + "ctl A { v := 0; }\nctl A { v := 1; }")
    with pytest.raises(ParseError):
        parse_model_text("param T = 1; param T = 2;")


def test_domain_bounds_must_be_ordered():
    with pytest.raises(ParseError):
        parse_model_text(HEADER + "ctl A { v := 0; }\ndomain d { p in [2, 1]; }")


def test_dangling_pipeline_reference():
    text = HEADER + """
ctl A { v := 0; }
angel n { pre { skip } post { skip } }
impl k closed { v+ := 0; }
domain d { p in [0, 1]; }
pipeline run { ctl A; angel n; impl missing; domain d; }
"""
    with pytest.raises(UnresolvedName) as err:
        parse_model_text(text)
    assert err.value.name == "missing"


def test_incomplete_pipeline():
    text = HEADER + "ctl A { v := 0; }\npipeline run { ctl A; }"
    with pytest.raises(ParseError):
        parse_model_text(text)


def test_missing_network_file(tmp_path):
    text = HEADER + 'ctl A { v := 0; }\nimpl n network "nowhere.nnet" inputs (p) regression v;'
    with pytest.raises(UnresolvedName):
        parse_model_text(text, tmp_path)


def test_envelope_without_pre_is_unresolved():
    with pytest.raises(UnresolvedName):
        parse_model_text("state p; ctl A { p := 0; }")


def test_unknown_names_on_lookup(robot):
    with pytest.raises(UnresolvedName):
        robot.model("C99")
    with pytest.raises(UnresolvedName):
        robot.model("C11", {"nope": F(1)})
    with pytest.raises(UnresolvedName):
        robot.domain("moon")


def test_bundled_data_dir_has_the_robot():
    assert (DATA_DIR / "robot.gdm").is_file()
