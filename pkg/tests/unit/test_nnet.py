from fractions import Fraction

import pytest

from envguard.connectors.nnet_format import dump_network, parse_network
from envguard.errors import DimensionMismatch, FormatError
from envguard.hybrid.implementations import argmax_index, argmax_selector
from envguard.kernel.formulas import evaluate_formula
from envguard.kernel.terms import Var, evaluate_term
from envguard.nnet.network import Layer, ReluNetwork, interval_bounds, network_to_constraints, realized_pattern
from envguard.nnet.verify import verify_network
from envguard.services.intervals import Interval
from envguard.services.obligations import build_robustness, build_safety_under_perturbation
from envguard.services.solver import SolverOptions, Status, decide

F = Fraction


def _regression(p, v):
    return p / 2 - 1 + v / 100 - min(max(p - 4, F(0)), F(4)) / 8


def test_regression_fixture_shape(regression_net):
    assert regression_net.input_dim == 2
    assert regression_net.output_dim == 1
    assert regression_net.parameter_count == 105
    assert regression_net.relu_layers() == [0, 1]


def test_regression_fixture_matches_its_formula(regression_net, rng):
    for _ in range(100):
        p = F(int(rng.integers(0, 120)), 10)
        v = F(int(rng.integers(-100, 100)), 10)
        assert regression_net.evaluate([p, v]) == [_regression(p, v)]


def test_classifier_picks_actions(classifier_net):
    assert argmax_index(classifier_net.evaluate([0, 0])) == 0
    assert argmax_index(classifier_net.evaluate([2, 0])) == 1
    assert argmax_index(classifier_net.evaluate([5, 0])) == 2


def test_argmax_ties_go_to_the_first_index():
    assert argmax_index([F(1), F(3), F(3)]) == 1
    assert argmax_index([F(0), F(0), F(0)]) == 0


def test_argmax_selector_agrees_with_argmax_on_ties():
    outs = [Var("o0"), Var("o1"), Var("o2")]
    for values in ([1, 3, 3], [0, 0, 0], [2, 1, 2], [1, 2, 0]):
        s = {f"o{i}": F(v) for i, v in enumerate(values)}
        winners = [i for i in range(3) if evaluate_formula(argmax_selector(i, outs), s)]
        assert winners == [argmax_index([F(v) for v in values])]


def test_interval_bounds_enclose_samples(regression_net, rng):
    box = [Interval(0, 10), Interval(-10, 10)]
    out = interval_bounds(regression_net, box).outputs[0]
    for _ in range(100):
        p = F(int(rng.integers(0, 101)), 10)
        v = F(int(rng.integers(-100, 101)), 10)
        assert out.contains(regression_net.evaluate([p, v])[0])


def test_fixed_phase_can_be_impossible(regression_net):
    # neuron 1 of layer 0 is p - 4, never active below p = 4
    assert interval_bounds(regression_net, [Interval(0, 2), Interval(0, 1)], {(0, 1): True}) is None


def test_pattern_encoding_is_exact_at_the_point(regression_net, rng):
    for _ in range(30):
        x = [F(int(rng.integers(0, 100)), 10), F(int(rng.integers(-100, 100)), 10)]
        pattern = realized_pattern(regression_net, x)
        region, outputs = network_to_constraints(regression_net, pattern)
        s = {"x0": x[0], "x1": x[1]}
        assert evaluate_formula(region, s)
        assert evaluate_term(outputs[0], s) == regression_net.evaluate(x)[0]


def test_written_network_reads_back(regression_net):
    again = parse_network(dump_network(regression_net))
    assert again.layers == regression_net.layers


def test_format_errors_carry_line_numbers():
    with pytest.raises(FormatError) as err:
        parse_network("nnet-ratio v2\n")
    assert err.value.line == 1
    with pytest.raises(FormatError):
        parse_network("nnet-ratio v1\ninputs 1\noutputs 1\nlayer 1 1 relu\n1\n0\n")
    with pytest.raises(FormatError):
        parse_network("nnet-ratio v1\ninputs 1\noutputs 1\nlayer 1 1 identity\nx\n0\n")


def test_dimension_errors():
    with pytest.raises(DimensionMismatch):
        parse_network("nnet-ratio v1\ninputs 2\noutputs 1\nlayer 1 3 identity\n1 1 1\n0\n")
    with pytest.raises(DimensionMismatch):
        ReluNetwork((Layer(((F(1), F(2)),), (F(0), F(1)), "identity"),))
    net = ReluNetwork((Layer(((F(1),),), (F(0),), "identity"),))
    with pytest.raises(DimensionMismatch):
        net.evaluate([1, 2])


def test_verify_network_refuses_plain_obligations(robot):
    ob = build_robustness(robot.model("C12"), robot.perturbation("angel1"))
    assert verify_network(ob, {}).status is Status.UNKNOWN


def _network_safety(robot, ctl, impl):
    model = robot.model(ctl, {"delta_v": F(1, 100)})
    return build_safety_under_perturbation(model, robot.perturbation("angel1"), robot.implementation(impl))


@pytest.mark.slow
@pytest.mark.parametrize("impl", ["nn_regression", "nn_classifier"])
def test_networks_are_safe_for_the_bidirectional_envelope(robot, impl):
    ob = _network_safety(robot, "C12", impl)
    verdict = decide(ob, SolverOptions(timeout_seconds=300), domain=robot.domain("desk"))
    assert verdict.status is Status.PROVEN
    assert verdict.engine == "nnet"


@pytest.mark.slow
@pytest.mark.parametrize("impl", ["nn_regression", "nn_classifier"])
def test_networks_reverse_towards_the_wall(robot, impl):
    ob = _network_safety(robot, "C11", impl)
    verdict = decide(ob, SolverOptions(timeout_seconds=300), domain=robot.domain("desk"))
    assert verdict.status is Status.COUNTEREXAMPLE
    assert verdict.engine == "nnet"
