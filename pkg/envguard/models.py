# envguard/models.py
from __future__ import annotations

import json
from fractions import Fraction
from typing import Any, Dict, List, Literal, Mapping, Optional

from pydantic import BaseModel, Field

from envguard.utils.rationals import format_fraction

SCHEMA_VERSION = 1


def rationals(values: Optional[Mapping[str, Fraction]]) -> Optional[Dict[str, str]]:
    if values is None:
        return None
    return {k: format_fraction(v) for k, v in sorted(values.items())}


# -----------------------------
# Verdicts
# -----------------------------
class VerdictRecord(BaseModel):
    """
    Serialized solver verdict. Counterexamples use report names: plain names
    for the initial state, `x@k` for later copies, exact "n/d" strings.
    """
    status: Literal["proven", "counterexample", "unknown"]
    engine: str = ""
    reason: Optional[str] = None
    counterexample: Optional[Dict[str, str]] = None
    concrete_violation: Optional[bool] = None
    eliminations: int = 0
    atoms_peak: int = 0
    boxes_explored: int = 0
    depth_max: int = 0
    wall_time_ms: int = 0

    @classmethod
    def from_verdict(cls, verdict, ob=None, concrete: Optional[bool] = None) -> "VerdictRecord":
        cex = verdict.counterexample
        if cex is not None and ob is not None:
            cex = ob.rename_back(cex)
        s = verdict.stats
        return cls(
            status=verdict.status.value,
            engine=verdict.engine,
            reason=verdict.reason,
            counterexample=rationals(cex),
            concrete_violation=concrete,
            eliminations=s.eliminations,
            atoms_peak=s.atoms_peak,
            boxes_explored=s.boxes_explored,
            depth_max=s.depth_max,
            wall_time_ms=int(s.wall_time * 1000),
        )


# -----------------------------
# Tuning
# -----------------------------
class TuningRecord(BaseModel):
    target: str
    total_error: str
    cost: str
    uniform_width: int
    uniform_cost: str
    max_width: int
    iterations: int
    formats: Dict[str, str]
    wall_time_ms: int = 0

    @classmethod
    def from_result(cls, result) -> "TuningRecord":
        formats = {k: str(f) for k, f in sorted(result.program.formats.items(), key=lambda kv: _id_order(kv[0]))}
        return cls(
            target=format_fraction(result.target),
            total_error=format_fraction(result.total_error),
            cost=format_fraction(result.cost),
            uniform_width=result.uniform_width,
            uniform_cost=format_fraction(result.uniform_cost),
            max_width=max((f.width for f in result.program.formats.values()), default=0),
            iterations=result.iterations,
            formats=formats,
            wall_time_ms=int(result.wall_time * 1000),
        )


def _id_order(ident: str):
    return (0, int(ident[1:])) if ident[1:].isdigit() else (1, ident)


# -----------------------------
# Reports
# -----------------------------
class StageResult(BaseModel):
    stage: Literal["monitor", "robustness", "liveness", "safety", "real_valued", "tuning", "emit"]
    ok: bool
    verdict: Optional[VerdictRecord] = None
    tuning: Optional[TuningRecord] = None
    artifact: Optional[str] = None  # file name in the report store
    error: Optional[str] = None
    details: Dict[str, Any] = Field(default_factory=dict)


class Report(BaseModel):
    schema_version: int = SCHEMA_VERSION
    tool_version: str
    environment: Dict[str, str] = Field(default_factory=dict)
    inputs: Dict[str, str] = Field(default_factory=dict)  # path -> sha256
    selections: Dict[str, str] = Field(default_factory=dict)
    stages: List[StageResult] = Field(default_factory=list)
    mismatches: List[str] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.stages) and not self.mismatches

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


class ExpectationRow(BaseModel):
    """One pinned fact of the robot suite."""
    id: str
    group: Literal["monitor", "robustness", "liveness", "safety", "real_valued", "network", "tuning"]
    ctl: str
    angel: Optional[str] = None
    impl: Optional[str] = None
    domain: Optional[str] = None
    params: Dict[str, str] = Field(default_factory=dict)
    expect: Literal["proven", "counterexample", "feasible"]
    # counterexample values that must fall in [lo, hi] (report names)
    witness: Dict[str, List[str]] = Field(default_factory=dict)
    # monitor rows: the formula the synthesized monitor must be equivalent to
    formula: Optional[str] = None
    target: Optional[str] = None
    max_width: Optional[int] = None
    # tuning rows with a fixed uniform width bound the analyzed error instead
    uniform_width: Optional[int] = None
    max_error: Optional[str] = None
