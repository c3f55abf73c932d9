from fractions import Fraction

import pytest

from envguard.config import Settings
from envguard.deps import build_toolchain, parse_cost_weights, parse_param
from envguard.utils.rationals import format_fraction, sample_rational, to_fraction


def test_parse_param():
    assert parse_param("delta_v=1/4") == {"delta_v": Fraction(1, 4)}
    assert parse_param("W = 0.5") == {"W": Fraction(1, 2)}
    assert parse_param("T=?") == {"T": None}
    for bad in ("T", "=1", "T="):
        with pytest.raises(ValueError):
            parse_param(bad)


def test_parse_cost_weights_overrides_a_subset():
    w = parse_cost_weights("add=1/4")
    assert w.add == Fraction(1, 4)
    assert w.mul == 1 and w.div == 1
    assert parse_cost_weights("").add == Fraction(1, 8)
    with pytest.raises(ValueError):
        parse_cost_weights("shift=2")


def test_overrides_reach_the_toolchain(tmp_path):
    tc = build_toolchain({
        "report_dir": str(tmp_path),
        "engine": "qe",
        "samples": 17,
        "cross_check_samples": 9,
        "seed": 5,
        "max_width": 20,
        "depth_cap": None,
        "log_level": "WARNING",
    })
    try:
        assert tc.solver.engine == "qe"
        assert tc.solver.falsify_samples == 17
        assert tc.cross_check_samples == 9
        # None means "not given"
        assert tc.solver.depth_cap == 40
        assert tc.tuner.max_width == 20
        assert tc.store.root == tmp_path
        assert tc.rng(1).integers(0, 1 << 30) == tc.rng(1).integers(0, 1 << 30)
    finally:
        tc.close()


def test_rationals_are_exact():
    assert to_fraction("0.1") == Fraction(1, 10)
    assert format_fraction(Fraction(-3, 6)) == "-1/2"
    assert format_fraction(Fraction(4)) == "4"
    with pytest.raises(TypeError):
        to_fraction(0.1)
    with pytest.raises(TypeError):
        to_fraction(True)


def test_samples_stay_in_range(rng):
    for _ in range(100):
        x = sample_rational(rng, Fraction(-1, 3), Fraction(2))
        assert Fraction(-1, 3) <= x <= 2


def test_network_cross_check_defaults_to_a_million_samples():
    assert Settings.model_fields["CROSS_CHECK_SAMPLES"].default == 1_000_000
