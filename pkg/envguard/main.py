# envguard/main.py
from __future__ import annotations

import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Dict, Optional

import click

from envguard import __version__
from envguard.connectors.model_dsl import ModelFile, PipelineDecl, parse_model
from envguard.deps import DATA_DIR, Toolchain, build_toolchain, parse_cost_weights, parse_param
from envguard.errors import EnvguardError, MismatchedExpectation
from envguard.fixedpoint.codegen import emit as emit_program
from envguard.models import Report, StageResult
from envguard.services import pipeline
from envguard.utils.logging import get_logger
from envguard.utils.rationals import to_fraction

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_COUNTEREXAMPLE = 2
EXIT_UNKNOWN = 3
EXIT_INPUT = 4

_VERDICT_EXIT = {"proven": EXIT_OK, "counterexample": EXIT_COUNTEREXAMPLE, "unknown": EXIT_UNKNOWN}


class EnvguardCLI(click.Group):
    """Commands return their exit code; errors are mapped here in one place."""

    def main(self, *args, **kwargs):
        kwargs["standalone_mode"] = False
        try:
            code = super().main(*args, **kwargs)
        except click.ClickException as e:
            e.show()
            code = EXIT_INPUT
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = EXIT_INPUT
        except EnvguardError as e:
            click.echo(f"error: {e}", err=True)
            code = EXIT_INPUT if e.input_error else EXIT_UNKNOWN
        sys.exit(code if isinstance(code, int) else EXIT_OK)


# -----------------------------
# Shared plumbing
# -----------------------------
def _toolchain(ctx: click.Context) -> Toolchain:
    root = ctx.find_root()
    if "toolchain" not in root.meta:
        tc = build_toolchain(root.obj)
        root.meta["toolchain"] = tc
        root.call_on_close(tc.close)
    return root.meta["toolchain"]


def _params(values) -> Dict[str, Optional[Fraction]]:
    overrides: Dict[str, Optional[Fraction]] = {}
    for text in values:
        try:
            overrides.update(parse_param(text))
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint="--param") from None
    return overrides


def _check_cost_weights(ctx, param, value):
    if value is not None:
        try:
            parse_cost_weights(value)
        except (ValueError, ZeroDivisionError) as e:
            raise click.BadParameter(str(e)) from None
    return value


def _load(ctx: click.Context, model_path: str) -> ModelFile:
    return parse_model(model_path, _toolchain(ctx).logger)


def _json_mode(ctx: click.Context) -> bool:
    return bool(ctx.find_root().params.get("as_json"))


def _exit_for(result: StageResult) -> int:
    if result.verdict is not None:
        return _VERDICT_EXIT[result.verdict.status]
    return EXIT_OK if result.ok else EXIT_COUNTEREXAMPLE


def _print_stage(ctx: click.Context, result: StageResult) -> int:
    if _json_mode(ctx):
        click.echo(json.dumps(result.model_dump(mode="json"), sort_keys=True, indent=2))
        return _exit_for(result)
    line = f"{result.stage}: "
    if result.verdict is not None:
        v = result.verdict
        line += v.status
        if v.reason:
            line += f" ({v.reason})"
        click.echo(line)
        if v.counterexample:
            click.echo("  " + "  ".join(f"{k}={val}" for k, val in v.counterexample.items()))
        if v.concrete_violation is not None:
            click.echo(f"  concrete violation: {'yes' if v.concrete_violation else 'no'}")
    else:
        click.echo(line + ("ok" if result.ok else "failed"))
    if result.tuning is not None:
        t = result.tuning
        click.echo(f"  error bound {t.total_error} <= {t.target}, widest {t.max_width} bits, cost {t.cost}")
        click.echo(f"  uniform width {t.uniform_width} (cost {t.uniform_cost}), {t.iterations} iteration(s)")
    for key in ("formula", "reduces_to_liveness", "max_realized_error"):
        if key in result.details:
            click.echo(f"  {key.replace('_', ' ')}: {result.details[key]}")
    if result.artifact:
        click.echo(f"  artifact: {result.artifact}")
    return _exit_for(result)


def _print_report(ctx: click.Context, report: Report) -> None:
    if _json_mode(ctx):
        click.echo(report.to_json(), nl=False)
        return
    for result in report.stages:
        ident = result.details.get("id")
        status = result.verdict.status if result.verdict else ("ok" if result.ok else "failed")
        click.echo(f"{ident or result.stage}: {status}")
    for m in report.mismatches:
        click.echo(f"MISMATCH {m}")


def model_options(fn):
    fn = click.option(
        "--param", "params", multiple=True, metavar="NAME=VALUE",
        help="Override a model parameter (NAME=? leaves it symbolic).",
    )(fn)
    fn = click.option(
        "-m", "--model", "model_path", default=str(DATA_DIR / "robot.gdm"), show_default=False,
        type=click.Path(exists=True, dir_okay=False), help="Model file (.gdm); defaults to the bundled robot.",
    )(fn)
    return fn


# -----------------------------
# Commands
# -----------------------------
@click.group(cls=EnvguardCLI)
@click.option("--json", "as_json", is_flag=True, help="Print machine-readable JSON.")
@click.option("--timeout", type=float, default=None, help="Solver timeout in seconds.")
@click.option("--workers", type=click.IntRange(min=1), default=None)
@click.option("--seed", type=int, default=None, help="Seed for every sampling step.")
@click.option("--log-level", default=None, type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.option("--engine", default=None, type=click.Choice(["auto", "qe", "bb"]))
@click.option("--depth-cap", type=int, default=None)
@click.option("--samples", type=int, default=None, help="Falsifier / simulation sample count.")
@click.option("--monitor-samples", type=int, default=None)
@click.option("--cross-check-samples", type=click.IntRange(min=0), default=None, help="Falsifier samples behind proven network rows.")
@click.option("--max-width", type=click.IntRange(min=2), default=None)
@click.option("--cost-weights", default=None, metavar="mul=..,add=..,div=..", callback=_check_cost_weights)
@click.option("--report-dir", type=click.Path(file_okay=False), default=None)
@click.version_option(__version__, prog_name="envguard")
@click.pass_context
def cli(ctx, as_json, **overrides):
    """Robustness, implementation safety and fixed-point tuning for control envelopes."""
    ctx.obj = overrides


@cli.command()
@model_options
@click.option("--ctl", required=True, help="Control envelope name.")
@click.pass_context
def monitor(ctx, model_path, params, ctl):
    """Synthesize the controller monitor and sample-check it."""
    mf = _load(ctx, model_path)
    return _print_stage(ctx, pipeline.run_monitor(mf.model(ctl, _params(params)), _toolchain(ctx)))


@cli.command()
@model_options
@click.option("--ctl", required=True)
@click.option("--angel", required=True, help="Perturbation name.")
@click.option("--domain", default=None, help="Optional box for the branch-and-bound engine.")
@click.pass_context
def robustness(ctx, model_path, params, ctl, angel, domain):
    """Decide robustness of an envelope under an angelic perturbation."""
    mf = _load(ctx, model_path)
    box = mf.domain(domain) if domain else None
    result, _ = pipeline.run_robustness(mf.model(ctl, _params(params)), mf.perturbation(angel), _toolchain(ctx), box)
    return _print_stage(ctx, result)


@cli.command()
@model_options
@click.option("--ctl", required=True)
@click.pass_context
def liveness(ctx, model_path, params, ctl):
    """Decide that the envelope always admits some action."""
    mf = _load(ctx, model_path)
    result, _ = pipeline.run_liveness(mf.model(ctl, _params(params)), _toolchain(ctx))
    return _print_stage(ctx, result)


@cli.command()
@model_options
@click.option("--ctl", required=True)
@click.option("--angel", default=None, help="Perturbation; omit with --real-valued.")
@click.option("--impl", "impl_name", required=True)
@click.option("--domain", required=True)
@click.option("--real-valued", is_flag=True, help="Plain containment check without perturbation.")
@click.pass_context
def verify(ctx, model_path, params, ctl, angel, impl_name, domain, real_valued):
    """Decide safety of an implementation against an envelope."""
    tc = _toolchain(ctx)
    mf = _load(ctx, model_path)
    model = mf.model(ctl, _params(params))
    impl = mf.implementation(impl_name, tc.logger)
    if real_valued:
        result, _ = pipeline.run_real_valued(model, impl, mf.domain(domain), tc)
    else:
        if angel is None:
            raise click.UsageError("--angel is required unless --real-valued is given")
        result, _ = pipeline.run_safety(model, mf.perturbation(angel), impl, mf.domain(domain), tc)
    return _print_stage(ctx, result)


def _tune(ctx, model_path, params, ctl, angel, impl_name, domain, target_error):
    tc = _toolchain(ctx)
    mf = _load(ctx, model_path)
    model = mf.model(ctl, _params(params))
    target = to_fraction(target_error) if target_error else None
    return pipeline.run_tuning(
        model, mf.perturbation(angel), mf.implementation(impl_name, tc.logger), mf.domain(domain), tc, target=target
    )


def tuning_options(fn):
    for opt in reversed([
        click.option("--ctl", required=True),
        click.option("--angel", required=True, help="Its input noise widens the domain; its output bound is the default target."),
        click.option("--impl", "impl_name", required=True),
        click.option("--domain", required=True),
        click.option("--target-error", default=None, metavar="RATIONAL"),
    ]):
        fn = opt(fn)
    return model_options(fn)


@cli.command()
@tuning_options
@click.pass_context
def tune(ctx, model_path, params, ctl, angel, impl_name, domain, target_error):
    """Find cheap fixed-point formats meeting the error target."""
    result, _ = _tune(ctx, model_path, params, ctl, angel, impl_name, domain, target_error)
    return _print_stage(ctx, result)


@cli.command()
@tuning_options
@click.option("-o", "--output", type=click.Path(dir_okay=False, writable=True), default=None)
@click.pass_context
def emit(ctx, model_path, params, ctl, angel, impl_name, domain, target_error, output):
    """Tune, then write the integer program in the fxp text format."""
    tuning, tuned = _tune(ctx, model_path, params, ctl, angel, impl_name, domain, target_error)
    if not tuning.ok:
        return _print_stage(ctx, tuning)
    result = pipeline.run_emit(tuned, _toolchain(ctx))
    text = emit_program(tuned.program)
    if output:
        Path(output).write_text(text, encoding="utf-8")
        return _print_stage(ctx, result)
    click.echo(text, nl=False)
    return _exit_for(result)


@cli.command("pipeline")
@model_options
@click.argument("name", required=False)
@click.option("--ctl", default=None)
@click.option("--angel", default=None)
@click.option("--impl", "impl_name", default=None)
@click.option("--domain", default=None)
@click.option("--target-error", default=None, metavar="RATIONAL")
@click.pass_context
def run_pipeline_cmd(ctx, model_path, params, name, ctl, angel, impl_name, domain, target_error):
    """Monitor, robustness, safety, tuning and emission in order, stopping at the first failure."""
    tc = _toolchain(ctx)
    mf = _load(ctx, model_path)
    if name:
        sel = mf.pipeline(name)
    else:
        if not all((ctl, angel, impl_name, domain)):
            raise click.UsageError("give a pipeline NAME or all of --ctl, --angel, --impl and --domain")
        sel = PipelineDecl("cli", ctl, angel, impl_name, domain)
    if target_error:
        sel = PipelineDecl(sel.name, sel.ctl, sel.angel, sel.impl, sel.domain, to_fraction(target_error))
    report = pipeline.run_pipeline(mf, sel, tc, _params(params))
    _print_report(ctx, report)
    return _exit_for(report.stages[-1]) if report.stages else EXIT_UNKNOWN


@cli.command()
@click.option("--only", multiple=True, help="Restrict to a group (robustness, safety, ...) or a row id.")
@click.option("--expectations", type=click.Path(exists=True, dir_okay=False), default=None)
@click.pass_context
def reproduce(ctx, only, expectations):
    """Check the robot case study against its pinned expectations."""
    tc = _toolchain(ctx)
    kwargs = {"expectations_path": expectations} if expectations else {}
    try:
        report = pipeline.reproduce_robot_suite(tc, only=list(only), **kwargs)
    except MismatchedExpectation as e:
        _print_report(ctx, e.report)
        get_logger().error("%d expectation(s) not met", len(e.mismatches))
        return EXIT_MISMATCH
    _print_report(ctx, report)
    return EXIT_OK


def run() -> None:
    cli(prog_name="envguard")


if __name__ == "__main__":
    run()
