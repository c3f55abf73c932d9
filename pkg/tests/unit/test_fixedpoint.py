from fractions import Fraction
from pathlib import Path

import pytest

from envguard.errors import (
    DenominatorMayVanish,
    DimensionMismatch,
    FormatError,
    Infeasible,
    RangeOverflow,
    SimOverflow,
    UnsupportedOp,
)
from envguard.fixedpoint.analysis import analyze, assign_formats, cost, dyadic_bits, uniform_widths
from envguard.fixedpoint.codegen import emit, parse_emitted
from envguard.fixedpoint.formats import FixedFormat, format_with_int_bits
from envguard.fixedpoint.program import Op, StraightLineProgram, lower, lower_network
from envguard.fixedpoint.simulator import rescale, simulate
from envguard.fixedpoint.tuning import TuningOptions, tune
from envguard.hybrid.implementations import bind_parameters
from envguard.services.intervals import Interval


F = Fraction
S16_8 = FixedFormat(16, 8)
GOLDEN = Path(__file__).resolve().parents[1] / "golden"


def _affine() -> StraightLineProgram:
    # y = 3/2 * x + 1
    ops = (
        Op("load", "t0", name="x"),
        Op("const", "t1", value=F(3, 2)),
        Op("mul", "t2", ("t0", "t1")),
        Op("const", "t3", value=F(1)),
        Op("add", "t4", ("t2", "t3")),
        Op("store", "t5", ("t4",), name="y"),
    )
    formats = {"t0": S16_8, "t1": S16_8, "t2": S16_8, "t3": FixedFormat(12, 4), "t4": S16_8, "t5": S16_8}
    return StraightLineProgram(ops, ("x",), ("y",), formats)


def _impl_r(robot, domain):
    impl = bind_parameters(robot.implementation("impl_R"), robot.fixed_params())
    return lower(impl, domain)


# -----------------------------
# Formats
# -----------------------------
def test_format_limits():
    assert S16_8.step == F(1, 256)
    assert S16_8.lo == -128
    assert S16_8.hi == F(32767, 256)
    assert str(S16_8) == "s16.8"
    unsigned = FixedFormat(8, 8, 0)
    assert unsigned.lo == 0 and unsigned.hi == F(255, 256)
    assert format_with_int_bits(16, 7) == S16_8


def test_invalid_formats():
    with pytest.raises(ValueError):
        FixedFormat(8, 8)
    with pytest.raises(ValueError):
        FixedFormat(65, 0)


def test_quantize_truncates_towards_minus_infinity():
    f = FixedFormat(8, 2)
    assert f.quantize(F(3, 8)) == 1
    assert f.quantize(F(-1, 8)) == -1
    assert f.value(f.quantize(F(5, 4))) == F(5, 4)


# -----------------------------
# Lowering
# -----------------------------
def test_network_lowering_op_counts(regression_net):
    prog = lower_network(regression_net)
    assert prog.count("load") == 2
    assert prog.count("const") == 105
    assert prog.count("mul") == 88
    assert prog.count("add") == 88
    assert prog.count("max0") == 16
    assert prog.count("store") == 1
    assert list(prog.layers()) == [1, 2, 3]


def test_lowered_network_keeps_real_semantics(regression_net, rng):
    prog = lower_network(regression_net)
    for _ in range(20):
        x = [F(int(rng.integers(0, 100)), 10), F(int(rng.integers(-100, 100)), 10)]
        assert prog.evaluate_exact(x) == regression_net.evaluate(x)


def test_closed_form_uses_a_guarded_reciprocal(robot):
    prog = _impl_r(robot, robot.domain("wall"))
    assert prog.inputs == ("p",)
    assert prog.count("recip") == 1
    assert prog.evaluate_exact([0]) == [F(-1, 2)]


def test_vanishing_denominator_is_refused(robot):
    with pytest.raises(DenominatorMayVanish):
        _impl_r(robot, {"p": Interval(-20, 0)})
    with pytest.raises(UnsupportedOp):
        _impl_r(robot, {})


# -----------------------------
# Analysis and simulation
# -----------------------------
def test_dyadic_bits():
    assert dyadic_bits(F(3, 8)) == 3
    assert dyadic_bits(F(5)) == 0
    assert dyadic_bits(F(1, 3)) is None


def test_affine_error_bound():
    analysis = analyze(_affine(), {"x": Interval(0, 10)})
    # only the product drops a bit: x on 2^-8 times 3/2 lies on 2^-9
    assert analysis.total_error == F(1, 512)
    assert analysis.errors["t0"] == 0


def test_simulation_is_bit_exact():
    res = simulate(_affine(), [2])
    assert res.outputs == [F(4)]
    assert res.realized_error == 0


@pytest.mark.parametrize("samples", [200, pytest.param(100_000, marks=pytest.mark.slow)])
def test_realized_error_within_bound(rng, samples):
    prog = _affine()
    bound = analyze(prog, {"x": Interval(0, 10)}).total_error
    for _ in range(samples):
        x = F(int(rng.integers(0, 10_000)), 1000)
        assert simulate(prog, [x]).realized_error <= bound


def test_overflow_is_an_error():
    with pytest.raises(SimOverflow):
        simulate(_affine(), [100])
    with pytest.raises(DimensionMismatch):
        simulate(_affine(), [1, 2])


def test_rescale_floors():
    assert rescale(5, 2, 0) == 1
    assert rescale(-5, 2, 0) == -2
    assert rescale(3, 0, 2) == 12


@pytest.mark.parametrize("samples", [50, pytest.param(100_000, marks=pytest.mark.slow)])
def test_uniform_assignment_fits_ranges(regression_net, robot, rng, samples):
    prog = lower_network(regression_net, ["p", "v"])
    domain = robot.domain("desk")
    formatted = assign_formats(prog, domain, uniform_widths(prog, 24))
    bound = analyze(formatted, domain).total_error
    for _ in range(samples):
        x = [F(int(rng.integers(0, 1000)), 100), F(int(rng.integers(-1000, 1000)), 100)]
        assert simulate(formatted, x).realized_error <= bound


def test_too_narrow_width_overflows(robot):
    prog = _impl_r(robot, robot.domain("wall"))
    with pytest.raises(RangeOverflow):
        assign_formats(prog, robot.domain("wall"), uniform_widths(prog, 4))


def _finer(prog: StraightLineProgram, ident: str) -> StraightLineProgram:
    # same integer bits, one more fractional bit
    f = prog.formats[ident]
    return prog.with_formats({**prog.formats, ident: FixedFormat(f.width + 1, f.frac + 1)})


def test_finer_formats_never_raise_the_bound(robot):
    domain = robot.domain("wall")
    prog = _impl_r(robot, domain)
    cases = [
        (_affine(), {"x": Interval(0, 10)}),
        (assign_formats(prog, domain, uniform_widths(prog, 24)), domain),
    ]
    for formatted, box in cases:
        base = analyze(formatted, box).total_error
        for ident in formatted.tunable_ids():
            assert analyze(_finer(formatted, ident), box).total_error <= base


def test_cost_model():
    assert cost(_affine()) == 16 * 16 + F(1, 8) * 16


# -----------------------------
# Tuning
# -----------------------------
@pytest.mark.parametrize("samples", [100, pytest.param(100_000, marks=pytest.mark.slow)])
def test_tuning_meets_target_and_never_widens(robot, rng, samples):
    domain = robot.domain("wall")
    prog = _impl_r(robot, domain)
    result = tune(prog, domain, F(1, 4))
    assert result.total_error <= F(1, 4)
    assert result.cost <= result.uniform_cost
    assert max(result.widths().values()) <= result.uniform_width
    for _ in range(samples):
        x = F(int(rng.integers(0, 100_000)), 1000)
        assert simulate(result.program, [x]).realized_error <= result.total_error


def test_impossible_targets(robot):
    domain = robot.domain("wall")
    prog = _impl_r(robot, domain)
    with pytest.raises(Infeasible):
        tune(prog, domain, F(-1))
    # the reciprocal always rounds, so zero error is out of reach
    with pytest.raises(Infeasible):
        tune(prog, domain, 0, TuningOptions(max_width=12))


# -----------------------------
# Emission
# -----------------------------
def test_emit_matches_golden_files():
    assert emit(_affine()) == (GOLDEN / "affine.fxp").read_text()
    identity = StraightLineProgram(
        (Op("load", "t0", name="x"), Op("store", "t1", ("t0",), name="y")),
        ("x",),
        ("y",),
        {"t0": S16_8, "t1": S16_8},
    )
    assert emit(identity) == (GOLDEN / "identity.fxp").read_text()


def test_empty_program_is_header_only():
    assert emit(StraightLineProgram((), (), ())) == "fxp v1\n"
    assert parse_emitted("fxp v1\n").ops == ()


def test_emitted_program_simulates_identically(rng):
    reread = parse_emitted((GOLDEN / "affine.fxp").read_text())
    for _ in range(50):
        x = [F(int(rng.integers(0, 10_000)), 1000)]
        assert simulate(reread, x).outputs == simulate(_affine(), x).outputs


def test_reader_rejects_inconsistent_shift():
    text = (GOLDEN / "affine.fxp").read_text().replace("shift 8", "shift 7")
    with pytest.raises(FormatError) as err:
        parse_emitted(text)
    assert err.value.line == 4


def test_reader_rejects_undefined_ids_and_bad_headers():
    with pytest.raises(FormatError):
        parse_emitted("fxp v1\nout y t9\n")
    with pytest.raises(FormatError):
        parse_emitted("fxp v2\n")
