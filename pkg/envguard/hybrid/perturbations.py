# envguard/hybrid/perturbations.py
"""
Angelic perturbations: a (pre, post) pair of discrete loop-free programs run
before and after the controller. Two templates cover the usual profiles:
actuator/computation noise on outputs, and sensor noise on inputs with the
true value restored after the controller ran.
"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

from envguard.hybrid.programs import Assign, AssignAny, HybridProgram, Test, seq, skip, statements
from envguard.kernel.formulas import Compare, conj
from envguard.kernel.terms import Add, Neg, Term, Var, as_term


@dataclass(frozen=True)
class AngelicPerturbation:
    name: str
    pre: HybridProgram
    post: HybridProgram

    def bound_variables(self) -> Tuple[str, ...]:
        from envguard.hybrid.programs import bound_variables

        seen = dict.fromkeys(bound_variables(self.pre))
        seen.update(dict.fromkeys(bound_variables(self.post)))
        return tuple(seen)


def identity_perturbation(name: str = "identity") -> AngelicPerturbation:
    return AngelicPerturbation(name, skip(), skip())


def noise_name(var: str) -> str:
    return f"eps_{var}"


def saved_name(var: str) -> str:
    return f"{var}_pre"


def bounded_noise(var: str, delta: Term) -> List[HybridProgram]:
    """eps := *; ?(-delta <= eps & eps <= delta); var := var + eps"""
    eps = noise_name(var)
    delta = as_term(delta)
    bound = conj(Compare("<=", Neg(delta), Var(eps)), Compare("<=", Var(eps), delta))
    return [AssignAny(eps), Test(bound), Assign(var, Add(Var(var), Var(eps)))]


def output_noise(outputs: Mapping[str, object], name: str = "output_noise") -> AngelicPerturbation:
    """Perturb each controller output by at most its delta after the controller ran."""
    post: List[HybridProgram] = []
    for var, delta in outputs.items():
        post.extend(bounded_noise(var, delta))
    return AngelicPerturbation(name, skip(), seq(*post) if post else skip())


def sensor_and_output_noise(
    inputs: Mapping[str, object],
    outputs: Mapping[str, object],
    name: str = "sensor_and_output_noise",
) -> AngelicPerturbation:
    """
    Perturb what the controller sees of each input (saving the true value) and
    restore the inputs afterwards before perturbing the outputs.
    """
    pre: List[HybridProgram] = []
    post: List[HybridProgram] = []
    for var, delta in inputs.items():
        pre.append(Assign(saved_name(var), Var(var)))
        pre.extend(bounded_noise(var, delta))
        post.append(Assign(var, Var(saved_name(var))))
    for var, delta in outputs.items():
        post.extend(bounded_noise(var, delta))
    return AngelicPerturbation(
        name,
        seq(*pre) if pre else skip(),
        seq(*post) if post else skip(),
    )


# -----------------------------
# Template recognition
# -----------------------------
def _match_noise(stmts: List[HybridProgram], i: int):
    """Match eps := *; ?(-d <= eps & eps <= d); x := x + eps at stmts[i:]."""
    if i + 3 > len(stmts):
        return None
    a, t, u = stmts[i:i + 3]
    if not (isinstance(a, AssignAny) and isinstance(t, Test) and isinstance(u, Assign)):
        return None
    eps = a.var
    parts = getattr(t.cond, "args", None)
    if not parts or len(parts) != 2:
        return None
    lo, hi = parts
    if not (isinstance(lo, Compare) and lo.op == "<=" and lo.right == Var(eps) and isinstance(lo.left, Neg)):
        return None
    if not (isinstance(hi, Compare) and hi.op == "<=" and hi.left == Var(eps)):
        return None
    delta = hi.right
    if lo.left.arg != delta:
        return None
    x = u.var
    if u.term != Add(Var(x), Var(eps)):
        return None
    return x, delta


@dataclass(frozen=True)
class NoiseTemplate:
    inputs: Dict[str, Term]
    outputs: Dict[str, Term]
    saved: Dict[str, str]


def _is_skip(hp: HybridProgram) -> bool:
    return hp == skip()


def match_noise_template(ap: AngelicPerturbation) -> Optional[NoiseTemplate]:
    """
    Recognize the bounded templates structurally: optional sensor groups
    `s := x; eps := *; ?(-d <= eps & eps <= d); x := x + eps` in pre, the
    matching restores `x := s` first in post, then output noise groups.
    """
    inputs: Dict[str, Term] = {}
    saved: Dict[str, str] = {}
    pre = [] if _is_skip(ap.pre) else statements(ap.pre)
    i = 0
    while i < len(pre):
        save = pre[i]
        if not (isinstance(save, Assign) and isinstance(save.term, Var)):
            return None
        m = _match_noise(pre, i + 1)
        if m is None or m[0] != save.term.name:
            return None
        inputs[m[0]] = m[1]
        saved[m[0]] = save.var
        i += 4

    post = [] if _is_skip(ap.post) else statements(ap.post)
    j = 0
    restored = set()
    while j < len(post):
        stmt = post[j]
        if not (isinstance(stmt, Assign) and stmt.var in saved and stmt.term == Var(saved[stmt.var])):
            break
        restored.add(stmt.var)
        j += 1
    if restored != set(inputs):
        return None

    outputs: Dict[str, Term] = {}
    while j < len(post):
        m = _match_noise(post, j)
        if m is None:
            return None
        outputs[m[0]] = m[1]
        j += 3
    return NoiseTemplate(inputs, outputs, saved)
