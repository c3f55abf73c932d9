# envguard/hybrid/model.py
from __future__ import annotations
from fractions import Fraction
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, model_validator

from envguard.hybrid.programs import HybridProgram, bound_variables
from envguard.kernel.formulas import Formula, formula_variables


class EnvelopeModel(BaseModel):
    """
    A verified control envelope: pre/post conditions, the trusted loop
    invariant and the discrete controller. The plant is not represented; the
    invariant stands in for the proved safety statement.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str = "model"
    pre: Formula
    post: Formula
    inv: Formula
    ctl: HybridProgram
    # None marks a parameter that stays symbolic (universally quantified)
    parameters: Dict[str, Optional[Fraction]] = {}
    state_vars: List[str]
    notes: str = ""

    @model_validator(mode="after")
    def _check_signature(self):
        state = set(self.state_vars)
        stray = [x for x in bound_variables(self.ctl) if x not in state]
        if stray:
            raise ValueError(f"controller binds non-state variables: {', '.join(stray)}")
        allowed = state | set(self.parameters)
        unknown = sorted(formula_variables(self.inv) - allowed)
        if unknown:
            raise ValueError(f"invariant mentions undeclared names: {', '.join(unknown)}")
        return self

    def fixed_parameters(self) -> Dict[str, Fraction]:
        return {k: v for k, v in self.parameters.items() if v is not None}

    def symbolic_parameters(self) -> List[str]:
        return sorted(k for k, v in self.parameters.items() if v is None)

    def with_parameters(self, overrides: Dict[str, Optional[Fraction]]) -> "EnvelopeModel":
        if not overrides:
            return self
        merged = dict(self.parameters)
        merged.update(overrides)
        return self.model_copy(update={"parameters": merged})
