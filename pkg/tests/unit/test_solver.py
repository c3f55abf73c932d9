from fractions import Fraction

import numpy as np
import pytest

from envguard.services.branch_and_bound import bb_decide
from envguard.services.falsifier import falsify
from envguard.services.obligations import build_robustness, versaille_form
from envguard.services.solver import SolverOptions, Status, decide
from envguard.services.worker_pool import WorkerPool

F = Fraction


def test_qe_engine_reports_nonlinear_atoms(robot):
    ob = versaille_form(robot.model("C11"), robot.implementation("impl_R"))
    verdict = decide(ob, SolverOptions(engine="qe"), domain=robot.domain("wall"))
    assert verdict.status is Status.UNKNOWN
    assert verdict.reason.startswith("nonlinear atom")


def test_linear_obligation_goes_through_qe(robot):
    ob = build_robustness(robot.model("C11"), robot.perturbation("angel1"))
    verdict = decide(ob)
    assert verdict.status is Status.COUNTEREXAMPLE
    assert verdict.engine == "qe"
    assert verdict.stats.eliminations > 0


def test_atom_cap_becomes_unknown(robot):
    ob = build_robustness(robot.model("C12"), robot.perturbation("angel2"))
    verdict = decide(ob, SolverOptions(atoms_peak=1))
    assert verdict.status is Status.UNKNOWN
    assert "atoms_peak" in verdict.reason


def test_branch_and_bound_needs_universal_obligations(robot):
    ob = build_robustness(robot.model("C11"), robot.perturbation("angel1"))
    assert bb_decide(ob, {}).status is Status.UNKNOWN


def test_branch_and_bound_needs_a_bounded_domain(robot):
    ob = versaille_form(robot.model("C11"), robot.implementation("impl_R"))
    verdict = bb_decide(ob, {})
    assert verdict.status is Status.UNKNOWN
    assert verdict.reason.startswith("unbounded variable")


def test_falsifier_finds_the_wall_corner(robot, rng):
    # with the default M the command at p = 0 is negative
    ob = versaille_form(robot.model("C11"), robot.implementation("impl_R"))
    cex = falsify(ob, robot.domain("wall"), 200, rng)
    assert cex is not None
    assert 0 <= ob.rename_back(cex)["p"] <= 100


def test_falsifier_hit_does_not_depend_on_the_pool(robot):
    ob = versaille_form(robot.model("C11"), robot.implementation("impl_R"))
    serial = falsify(ob, robot.domain("wall"), 600, np.random.default_rng(7))
    with WorkerPool(2) as pool:
        parallel = falsify(ob, robot.domain("wall"), 600, np.random.default_rng(7), pool=pool)
    assert serial is not None
    assert parallel == serial


def test_falsifier_is_silent_on_a_safe_implementation(robot, rng):
    ob = versaille_form(robot.model("C11", {"M": F(10)}), robot.implementation("impl_R"))
    assert falsify(ob, robot.domain("wall"), 200, rng) is None


def test_falsifier_handles_alternation(robot, rng):
    ob = build_robustness(robot.model("C11"), robot.perturbation("angel1"))
    point = falsify(ob, robot.domain("wall"), 50, rng)
    assert point is not None


@pytest.mark.slow
def test_branch_and_bound_proves_tight_implementation(robot):
    ob = versaille_form(robot.model("C11", {"M": F(10)}), robot.implementation("impl_R"))
    with WorkerPool(2) as pool:
        verdict = decide(ob, SolverOptions(timeout_seconds=300), domain=robot.domain("wall"), pool=pool)
    assert verdict.status is Status.PROVEN
    assert verdict.engine == "bb"
    assert verdict.stats.boxes_explored > 0


@pytest.mark.slow
def test_branch_and_bound_confirms_counterexample(robot):
    ob = versaille_form(robot.model("C11"), robot.implementation("impl_R"))
    verdict = decide(ob, domain=robot.domain("wall"))
    assert verdict.status is Status.COUNTEREXAMPLE
    assert verdict.engine == "bb"
