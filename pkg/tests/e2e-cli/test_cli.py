import json

import click
import pytest
from click.testing import CliRunner

from envguard import __version__
from envguard.main import cli


@pytest.fixture
def invoke(tmp_path):
    runner = CliRunner()
    base = [
        "--report-dir", str(tmp_path / "reports"),
        "--log-level", "ERROR",
        "--samples", "200",
        "--monitor-samples", "200",
        "--cross-check-samples", "300",
    ]

    def _invoke(*args):
        return runner.invoke(cli, base + list(args), prog_name="envguard")

    return _invoke


def test_version(invoke):
    result = invoke("--version")
    assert result.exit_code == 0
    assert __version__ in result.output


def test_monitor_prints_formula(invoke):
    result = invoke("monitor", "--ctl", "C11")
    assert result.exit_code == 0, result.output
    assert "monitor: ok" in result.output
    assert "v_post" in result.output


def test_json_monitor_lists_its_variables(invoke):
    result = invoke("--json", "monitor", "--ctl", "C11")
    assert result.exit_code == 0, result.output
    details = json.loads(result.output)["details"]
    assert details["post_vars"] == ["v_post"]
    assert {"p", "T", "V_max"} <= set(details["pre_vars"])


def test_fragile_envelope_exits_with_counterexample(invoke):
    result = invoke("robustness", "--ctl", "C11", "--angel", "angel1")
    assert result.exit_code == 2
    assert "robustness: counterexample" in result.output
    assert "concrete violation: yes" in result.output


def test_json_verdict_with_parameter_override(invoke):
    result = invoke("--json", "robustness", "--ctl", "C12", "--angel", "angel1", "--param", "delta_v=5")
    assert result.exit_code == 0
    payload = json.loads(result.output)
    assert payload["stage"] == "robustness"
    assert payload["verdict"]["status"] == "proven"


def test_liveness(invoke):
    assert invoke("liveness", "--ctl", "C12").exit_code == 0


def test_real_valued_counterexample(invoke):
    result = invoke("verify", "--real-valued", "--ctl", "C11", "--impl", "impl_R", "--domain", "wall")
    assert result.exit_code == 2
    assert "real_valued: counterexample" in result.output


def test_qe_engine_gives_up_on_nonlinear_implementations(invoke):
    result = invoke("--engine", "qe", "verify", "--real-valued", "--ctl", "C11", "--impl", "impl_R", "--domain", "wall")
    assert result.exit_code == 3
    assert "nonlinear atom" in result.output


def test_input_errors_exit_4(invoke, tmp_path):
    assert invoke("verify", "--ctl", "C11", "--impl", "impl_R", "--domain", "wall").exit_code == 4
    assert invoke("liveness", "--ctl", "C99").exit_code == 4
    assert invoke("liveness", "--ctl", "C11", "--param", "delta_v").exit_code == 4
    assert invoke("liveness", "--ctl", "C11", "-m", str(tmp_path / "missing.gdm")).exit_code == 4
    assert invoke("pipeline").exit_code == 4


def test_malformed_cost_weights_exit_4(invoke):
    result = invoke("--cost-weights", "mul=abc", "liveness", "--ctl", "C11")
    assert result.exit_code == 4
    assert "cost-weights" in result.output


def test_abort_exits_4(invoke, monkeypatch):
    def interrupted(*args, **kwargs):
        raise click.Abort()

    monkeypatch.setattr("envguard.services.pipeline.run_liveness", interrupted)
    assert invoke("liveness", "--ctl", "C11").exit_code == 4


def test_fragile_pipeline_stops_early(invoke):
    result = invoke("pipeline", "robot_fragile")
    assert result.exit_code == 2
    assert "monitor: ok" in result.output
    assert "robustness: counterexample" in result.output
    assert "safety" not in result.output


def test_tune_meets_target(invoke):
    result = invoke(
        "tune", "--ctl", "C12", "--angel", "angel2", "--impl", "impl_R", "--domain", "wall", "--target-error", "1/4"
    )
    assert result.exit_code == 0, result.output
    assert "tuning: ok" in result.output


def test_emit_writes_program(invoke, tmp_path):
    out = tmp_path / "impl_R.fxp"
    result = invoke(
        "emit", "--ctl", "C12", "--angel", "angel2", "--impl", "impl_R", "--domain", "wall", "-o", str(out)
    )
    assert result.exit_code == 0, result.output
    text = out.read_text()
    assert text.startswith("fxp v1\n")
    assert "recip" in text
    assert "out v " in text


def test_reproduce_quick_groups(invoke):
    result = invoke("reproduce", "--only", "monitor", "--only", "liveness")
    assert result.exit_code == 0, result.output
    assert "monitor-C11: proven" in result.output


def test_reproduce_mismatch_exits_1(invoke, tmp_path):
    path = tmp_path / "expectations.json"
    path.write_text(json.dumps([{"id": "wrong", "group": "liveness", "ctl": "C12", "expect": "counterexample"}]))
    result = invoke("reproduce", "--expectations", str(path))
    assert result.exit_code == 1
    assert "MISMATCH wrong" in result.output


@pytest.mark.slow
def test_full_pipeline_json(invoke):
    result = invoke("--json", "pipeline", "robot_full")
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert [s["stage"] for s in report["stages"]] == ["monitor", "robustness", "safety", "tuning", "emit"]
