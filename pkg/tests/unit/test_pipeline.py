import json
from fractions import Fraction

import pytest

from envguard.errors import MismatchedExpectation, StageError, TemplateMismatch, UnresolvedName
from envguard.hybrid.perturbations import identity_perturbation
from envguard.services.intervals import Interval
from envguard.services.pipeline import (
    ROBOT_EXPECTATIONS,
    error_target,
    input_domain,
    load_expectations,
    new_report,
    reproduce_robot_suite,
    run_liveness,
    run_monitor,
    run_pipeline,
    run_robustness,
    stage,
)

F = Fraction


def test_monitor_stage_stores_the_formula(robot, toolchain):
    result = run_monitor(robot.model("C11"), toolchain)
    assert result.ok
    assert result.details["executions"] + result.details["replays"] > 0
    assert toolchain.store.get(result.artifact).strip() == result.details["formula"]


def test_robustness_stage_reports_a_concrete_counterexample(robot, toolchain):
    result, _ = run_robustness(robot.model("C11"), robot.perturbation("angel1"), toolchain)
    assert not result.ok
    assert result.verdict.status == "counterexample"
    assert result.verdict.concrete_violation is True
    assert 0 <= F(result.verdict.counterexample["p"]) <= F(1, 2)
    assert result.details["reduces_to_liveness"] is False
    assert result.artifact in toolchain.store.names("verdict")


def test_zero_noise_reduces_to_liveness(robot, toolchain):
    model = robot.model("C11", {"delta_v": F(0)})
    result, _ = run_robustness(model, robot.perturbation("angel1"), toolchain)
    assert result.ok
    assert result.details["reduces_to_liveness"] is True
    assert run_liveness(model, toolchain)[0].ok


def test_stage_wraps_errors_with_its_name(toolchain):
    with pytest.raises(StageError) as err:
        with stage("safety", toolchain):
            raise UnresolvedName("impl_X", "implementation")
    assert err.value.stage == "safety"
    assert err.value.input_error


def test_error_target_and_sensed_domain(robot):
    model = robot.model("C12")
    impl = robot.implementation("impl_R")
    assert error_target(model, robot.perturbation("angel2"), impl) == F(1, 4)
    with pytest.raises(TemplateMismatch):
        error_target(model, identity_perturbation(), impl)
    box = input_domain(model, robot.perturbation("angel2"), robot.domain("wall"))
    assert box["p"] == Interval(F(-1, 4), F(401, 4))
    assert input_domain(model, robot.perturbation("angel1"), robot.domain("wall")) == robot.domain("wall")


def test_report_records_input_digests(robot):
    report = new_report(robot, {"ctl": "C12"})
    assert set(report.inputs) == {"robot.gdm", "regression_2881.nnet", "classifier_2883.nnet"}
    assert all(len(d) == 64 for d in report.inputs.values())
    assert "python" in report.environment
    assert json.loads(report.to_json())["selections"] == {"ctl": "C12"}


def test_fragile_pipeline_stops_after_robustness(robot, toolchain):
    report = run_pipeline(robot, "robot_fragile", toolchain)
    assert [s.stage for s in report.stages] == ["monitor", "robustness"]
    assert not report.ok


def test_expectations_file_is_well_formed():
    rows = load_expectations(ROBOT_EXPECTATIONS)
    assert len({r.id for r in rows}) == len(rows)
    assert {r.group for r in rows} >= {"monitor", "liveness", "robustness", "safety", "network", "tuning"}


def test_reproduce_quick_groups(toolchain):
    report = reproduce_robot_suite(toolchain, only=["monitor", "liveness"])
    assert report.ok
    assert {s.details["id"] for s in report.stages} == {"monitor-C11", "monitor-C12", "liveness-C11", "liveness-C12"}


def test_reproduce_reports_mismatches(toolchain, tmp_path):
    path = tmp_path / "expectations.json"
    path.write_text(json.dumps([{"id": "wrong", "group": "liveness", "ctl": "C11", "expect": "counterexample"}]))
    with pytest.raises(MismatchedExpectation) as err:
        reproduce_robot_suite(toolchain, expectations_path=path)
    assert err.value.mismatches == ["wrong: expected counterexample, got proven"]
    (row,) = err.value.report.stages
    assert row.verdict.status == "proven" and not row.ok


def test_expected_counterexample_counts_as_met(toolchain):
    report = reproduce_robot_suite(toolchain, only=["robust-C11-angel1"])
    (row,) = report.stages
    assert row.verdict.status == "counterexample"
    assert row.ok and report.ok
    assert not report.mismatches


@pytest.mark.slow
def test_full_pipeline_emits_a_program(robot, toolchain):
    report = run_pipeline(robot, "robot_full", toolchain)
    assert [s.stage for s in report.stages] == ["monitor", "robustness", "safety", "tuning", "emit"]
    assert report.ok
    assert toolchain.store.names("program")


@pytest.mark.slow
def test_whole_robot_suite(toolchain):
    report = reproduce_robot_suite(toolchain)
    assert not report.mismatches
    assert report.ok


@pytest.mark.slow
def test_proven_network_rows_are_cross_checked(toolchain, monkeypatch):
    calls = []

    def recording(ob, domain, samples, rng, **kwargs):
        calls.append(samples)
        return None

    monkeypatch.setattr("envguard.services.pipeline.falsify", recording)
    report = reproduce_robot_suite(toolchain, only=["network-regression-C12"])
    assert report.ok
    assert calls == [toolchain.cross_check_samples] == [300]
